use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Env, EnvState};
use crate::error::{Error, Result};
use crate::momdp::Preference;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Expert,
    Amateur,
}

/// Noise draws beyond this many standard deviations are redrawn.
const NOISE_TRUNCATION: f64 = 2.0;

/// Preference-driven scripted policy used to generate offline data.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedBehaviorPolicy {
    pub preference: Preference,
    pub noise_scale: f64,
    pub quality: Quality,
}

impl ScriptedBehaviorPolicy {
    pub fn new(preference: Preference, quality: Quality, noise_scale: f64) -> Result<Self> {
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(Error::invalid(format!("noise scale must be >= 0, got {noise_scale}")));
        }
        if quality == Quality::Amateur && noise_scale == 0.0 {
            return Err(Error::invalid("amateur policies need a positive noise scale"));
        }
        Ok(Self {
            preference,
            noise_scale,
            quality,
        })
    }

    pub fn expert(preference: Preference) -> Self {
        Self {
            preference,
            noise_scale: 0.0,
            quality: Quality::Expert,
        }
    }

    /// Oracle-optimal action for the preference, perturbed for amateurs.
    pub fn action<R: Rng + ?Sized>(&self, env: &Env, state: &EnvState, rng: &mut R) -> Result<Vec<f64>> {
        let spec = env.spec();
        if self.preference.dim() != spec.n_objectives {
            return Err(Error::invalid(format!(
                "policy preference has {} objectives, {} has {}",
                self.preference.dim(),
                spec.name,
                spec.n_objectives
            )));
        }
        let mut action = match env {
            Env::LineWorld(e) => e.expert_action(self.preference[0]),
            Env::Treasure(e) => super::treasure::MOVES[e.expert_move(&self.preference, state)].0.to_vec(),
        };
        if self.quality == Quality::Amateur {
            for a in action.iter_mut() {
                *a += self.noise_scale * truncated_standard_normal(rng);
            }
        }
        Ok(spec.clip_action(&action))
    }
}

fn truncated_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= NOISE_TRUNCATION {
            return z;
        }
    }
}
