//! Behavior-cloning regularizer families. Each actor is conditioned on
//! `[state ‖ task_part ‖ bc_weight]` and provides a cloning loss, a
//! differentiable action sampler and a plain sampler for rollouts.

mod cvae;
mod diffusion;
mod mse;

use serde::{Deserialize, Serialize};

pub use cvae::CvaeActor;
pub use diffusion::{DiffusionActor, DiffusionSchedule, ReverseVariance, ScheduleKind};
pub use mse::MseActor;

use crate::error::{Error, Result};
use crate::momdp::AugmentedPreference;
use crate::nn::{Activation, Mlp, Parameterized, Tape, Tensor, Var};
use crate::noise::Noise;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mse,
    Cvae,
    Diffusion,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Mse, Family::Cvae, Family::Diffusion];

    pub fn name(self) -> &'static str {
        match self {
            Family::Mse => "mse",
            Family::Cvae => "cvae",
            Family::Diffusion => "diffusion",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Family::Mse),
            "cvae" => Ok(Family::Cvae),
            "diffusion" => Ok(Family::Diffusion),
            other => Err(Error::invalid(format!("unknown regularizer family `{other}`"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Network shapes and family-specific settings for an actor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorConfig {
    pub family: Family,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// CVAE latent size; `None` means twice the action dimension.
    pub latent_dim: Option<usize>,
    pub diffusion_steps: usize,
    pub schedule: ScheduleKind,
    /// Clip the predicted clean action to the action box at every reverse step.
    pub clip_denoised: bool,
    pub reverse_variance: ReverseVariance,
}

impl ActorConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            hidden: vec![64, 64],
            activation: Activation::Mish,
            latent_dim: None,
            diffusion_steps: 5,
            schedule: ScheduleKind::default(),
            clip_denoised: true,
            reverse_variance: ReverseVariance::default(),
        }
    }
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self::new(Family::Mse)
    }
}

/// Row-wise actor conditioning `[state ‖ task_part ‖ bc_weight]`.
pub fn actor_condition(states: &[&[f64]], prefs: &[&AugmentedPreference]) -> Result<Tensor> {
    if states.len() != prefs.len() {
        return Err(Error::invalid("states and preferences differ in length"));
    }
    let rows: Vec<Vec<f64>> = states
        .iter()
        .zip(prefs)
        .map(|(s, p)| {
            let mut r = s.to_vec();
            r.extend(p.features());
            r
        })
        .collect();
    Tensor::from_rows(&rows)
}

/// A preference-conditioned actor of one regularizer family. Actions live in
/// `[-1, 1]^action_dim`.
#[derive(Clone, Debug, PartialEq)]
pub enum Actor {
    Mse(MseActor),
    Cvae(CvaeActor),
    Diffusion(DiffusionActor),
}

impl Actor {
    pub fn new<R: rand::Rng + ?Sized>(cfg: &ActorConfig, cond_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(match cfg.family {
            Family::Mse => Actor::Mse(MseActor::new(cfg, cond_dim, action_dim, rng)?),
            Family::Cvae => Actor::Cvae(CvaeActor::new(cfg, cond_dim, action_dim, rng)?),
            Family::Diffusion => Actor::Diffusion(DiffusionActor::new(cfg, cond_dim, action_dim, rng)?),
        })
    }

    pub fn family(&self) -> Family {
        match self {
            Actor::Mse(_) => Family::Mse,
            Actor::Cvae(_) => Family::Cvae,
            Actor::Diffusion(_) => Family::Diffusion,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Actor::Mse(a) => a.action_dim(),
            Actor::Cvae(a) => a.action_dim(),
            Actor::Diffusion(a) => a.action_dim(),
        }
    }

    /// Per-sample cloning loss as a `B x 1` column.
    pub fn bc_loss<N: Noise + ?Sized>(&self, tape: &mut Tape, cond: Var, actions: Var, noise: &mut N, trainable: bool) -> Result<Var> {
        match self {
            Actor::Mse(a) => a.bc_loss(tape, cond, actions, trainable),
            Actor::Cvae(a) => a.bc_loss(tape, cond, actions, noise, trainable),
            Actor::Diffusion(a) => a.bc_loss(tape, cond, actions, noise, trainable),
        }
    }

    /// Batch-mean cloning loss.
    pub fn bc_loss_mean<N: Noise + ?Sized>(&self, tape: &mut Tape, cond: Var, actions: Var, noise: &mut N) -> Result<Var> {
        let per = self.bc_loss(tape, cond, actions, noise, true)?;
        Ok(tape.mean_all(per))
    }

    /// Action sample that gradients can flow through.
    pub fn sample_diff<N: Noise + ?Sized>(&self, tape: &mut Tape, cond: Var, noise: &mut N, trainable: bool) -> Result<Var> {
        match self {
            Actor::Mse(a) => a.forward(tape, cond, trainable),
            Actor::Cvae(a) => a.sample_diff(tape, cond, noise, trainable),
            Actor::Diffusion(a) => a.sample_diff(tape, cond, noise, trainable),
        }
    }

    /// Actions for a batch of conditions.
    pub fn sample<N: Noise + ?Sized>(&self, cond: &Tensor, noise: &mut N) -> Result<Tensor> {
        match self {
            Actor::Mse(a) => a.infer(cond),
            _ => {
                let mut tape = Tape::new();
                let c = tape.constant(cond.clone());
                let a = self.sample_diff(&mut tape, c, noise, false)?;
                Ok(tape.value(a).clone())
            }
        }
    }
}

impl Parameterized for Actor {
    fn modules(&self) -> Vec<&Mlp> {
        match self {
            Actor::Mse(a) => a.modules(),
            Actor::Cvae(a) => a.modules(),
            Actor::Diffusion(a) => a.modules(),
        }
    }

    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        match self {
            Actor::Mse(a) => a.modules_mut(),
            Actor::Cvae(a) => a.modules_mut(),
            Actor::Diffusion(a) => a.modules_mut(),
        }
    }
}

/// `B x 1` column of per-row squared error, summed (`mean = false`) or
/// averaged over columns.
pub(crate) fn row_sq_error(tape: &mut Tape, a: Var, b: Var, mean: bool) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d);
    let s = tape.sum_cols(sq);
    let cols = tape.shape(a)[1] as f64;
    Ok(if mean { tape.scale(s, 1.0 / cols) } else { s })
}
