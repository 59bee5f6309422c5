use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{Env, EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::momdp::{Preference, VectorReturn};
use crate::nn::Tensor;
use crate::noise::{Noise, RowSubset};

/// Anything that maps states and preferences to actions.
pub trait PreferencePolicy {
    fn spec(&self) -> &EnvSpec;

    /// Actions for a batch of states. `wbc` holds the cloning weight per
    /// row; policies without one ignore it.
    fn act(&self, states: &Tensor, prefs: &[&Preference], wbc: &[f64], noise: &mut dyn Noise) -> Result<Tensor>;
}

/// One episode to roll out. `stream` selects the episode's random stream,
/// so results do not depend on which other jobs share the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutJob {
    pub pref: Preference,
    pub wbc: f64,
    pub stream: u64,
}

fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Undiscounted episode return of every job, stepping all episodes in lockstep.
pub fn rollout_batch<P: PreferencePolicy + ?Sized>(policy: &P, env: &Env, jobs: &[RolloutJob], seed: u64) -> Result<Vec<VectorReturn>> {
    if policy.spec().name != env.spec().name {
        return Err(Error::invalid(format!(
            "policy was trained on `{}`, not `{}`",
            policy.spec().name,
            env.spec().name
        )));
    }
    let n = env.spec().n_objectives;
    let horizon = env.spec().horizon;
    let mut states: Vec<EnvState> = jobs.iter().map(|j| env.reset(mix(seed, j.stream))).collect();
    let mut rngs: Vec<ChaCha8Rng> = jobs
        .iter()
        .map(|j| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(j.stream);
            r
        })
        .collect();
    let mut returns = vec![VectorReturn::zeros(n); jobs.len()];
    loop {
        let active: Vec<usize> = (0..jobs.len())
            .filter(|&i| !states[i].terminal && states[i].step_count < horizon)
            .collect();
        if active.is_empty() {
            break;
        }
        let obs = Tensor::from_rows(&active.iter().map(|&i| states[i].observation.clone()).collect::<Vec<_>>())?;
        let prefs: Vec<&Preference> = active.iter().map(|&i| &jobs[i].pref).collect();
        let wbc: Vec<f64> = active.iter().map(|&i| jobs[i].wbc).collect();
        let mut noise = RowSubset {
            rngs: &mut rngs,
            rows: &active,
        };
        let actions = policy.act(&obs, &prefs, &wbc, &mut noise)?;
        for (k, &i) in active.iter().enumerate() {
            let (next, r, _) = env.step(&states[i], actions.row(k))?;
            returns[i] += &r;
            states[i] = next;
        }
    }
    Ok(returns)
}

/// Mean return over `episodes` rollouts for each preference, using cloning
/// weight `wbc[i]` at `prefs[i]`.
pub fn evaluate_policy<P: PreferencePolicy + ?Sized>(
    policy: &P,
    env: &Env,
    prefs: &[Preference],
    episodes: usize,
    wbc: &[f64],
    seed: u64,
) -> Result<Vec<(Preference, VectorReturn)>> {
    if prefs.len() != wbc.len() {
        return Err(Error::invalid("one cloning weight per preference is required"));
    }
    if episodes == 0 {
        return Err(Error::invalid("episodes must be at least 1"));
    }
    let jobs: Vec<RolloutJob> = prefs
        .iter()
        .zip(wbc)
        .enumerate()
        .flat_map(|(p, (pref, w))| {
            (0..episodes).map(move |e| RolloutJob {
                pref: pref.clone(),
                wbc: *w,
                stream: (p * episodes + e) as u64,
            })
        })
        .collect();
    let returns = rollout_batch(policy, env, &jobs, seed)?;
    Ok(prefs
        .iter()
        .zip(returns.chunks(episodes))
        .map(|(p, rs)| {
            let mut total = VectorReturn::zeros(env.spec().n_objectives);
            for r in rs {
                total += r;
            }
            (p.clone(), total.scaled(1.0 / episodes as f64))
        })
        .collect())
}
