//! Offline datasets: generation from scripted policies, approximate behavior
//! preference annotation, preference-distance filtering and batch sampling.

mod io;
mod sampler;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

pub use io::{load_dataset, save_dataset, FORMAT_VERSION};
pub use sampler::{sample_batch, sample_cap_preference, BatchSampler, SampleBatch};

use crate::envs::{Env, Quality, ScriptedBehaviorPolicy};
use crate::error::{Error, Result};
use crate::momdp::{cosine_distance, l1_normalize, Preference, Trajectory, Transition, VectorReturn};

/// Slack on the filter predicate so numerically colinear preferences pass at θ = 0.
pub const FILTER_TOL: f64 = 1e-12;

/// Offset added when shifting negative objectives to be positive.
const SHIFT_EPS: f64 = 1e-6;

/// Trajectories annotated with approximate behavior preferences.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub env_name: String,
    pub n_objectives: usize,
    pub objective_shift: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub approx_prefs: Vec<Preference>,
    /// Set when a filter produced no trajectories.
    pub warning: Option<String>,
}

/// How behavior preferences are drawn during generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefSampler {
    UniformSimplex,
    Fixed(Preference),
    /// Cycles through the simplex corners.
    CornerMixture,
}

impl std::str::FromStr for PrefSampler {
    type Err = Error;

    /// Parses `uniform`, `corner` or `fixed:w1,w2,...`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform-simplex" => Ok(PrefSampler::UniformSimplex),
            "corner" | "corner-mixture" => Ok(PrefSampler::CornerMixture),
            _ => {
                let rest = s.strip_prefix("fixed:").ok_or_else(|| {
                    Error::invalid(format!("unknown preference sampler `{s}` (uniform, corner, fixed:w1,w2)"))
                })?;
                let w = rest
                    .split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::invalid(format!("bad preference weight `{x}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PrefSampler::Fixed(Preference::new(w)?))
            }
        }
    }
}

/// Generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub n_traj: usize,
    /// Fraction of trajectories rolled out by the expert.
    pub quality_mix: f64,
    pub noise_scale: f64,
    pub pref_sampler: PrefSampler,
    pub seed: u64,
}

/// Uniform draw from the probability simplex.
pub fn uniform_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Preference {
    loop {
        let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = e.iter().sum();
        if total > 0.0 {
            if let Ok(p) = l1_normalize(&VectorReturn::new(e)) {
                return p;
            }
        }
    }
}

/// Rolls out scripted behavior policies and annotates every trajectory.
pub fn generate_dataset(env: &Env, cfg: &GenerateConfig) -> Result<OfflineDataset> {
    if cfg.n_traj == 0 {
        return Err(Error::invalid("n_traj must be at least 1"));
    }
    if !(0.0..=1.0).contains(&cfg.quality_mix) {
        return Err(Error::invalid(format!("quality_mix must lie in [0, 1], got {}", cfg.quality_mix)));
    }
    let n = env.spec().n_objectives;
    if let PrefSampler::Fixed(p) = &cfg.pref_sampler {
        if p.dim() != n {
            return Err(Error::invalid("fixed preference dimension does not match the environment"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_expert = (cfg.quality_mix * cfg.n_traj as f64).round() as usize;
    let mut expert = vec![false; cfg.n_traj];
    for i in index::sample(&mut rng, cfg.n_traj, n_expert) {
        expert[i] = true;
    }
    let mut trajectories = Vec::with_capacity(cfg.n_traj);
    for (i, &is_expert) in expert.iter().enumerate() {
        let pref = match &cfg.pref_sampler {
            PrefSampler::UniformSimplex => uniform_simplex(n, &mut rng),
            PrefSampler::Fixed(p) => p.clone(),
            PrefSampler::CornerMixture => Preference::corner(n, i % n)?,
        };
        let policy = if is_expert {
            ScriptedBehaviorPolicy::expert(pref)
        } else {
            ScriptedBehaviorPolicy::new(pref, Quality::Amateur, cfg.noise_scale)?
        };
        let mut policy_rng = ChaCha8Rng::seed_from_u64(rng.random());
        trajectories.push(rollout(env, &policy, rng.random(), &mut policy_rng)?);
    }
    OfflineDataset::from_trajectories(&env.spec().name, trajectories)
}

fn rollout(env: &Env, policy: &ScriptedBehaviorPolicy, seed: u64, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let mut state = env.reset(seed);
    let mut transitions = Vec::with_capacity(env.spec().horizon);
    loop {
        let action = policy.action(env, &state, rng)?;
        let (next, reward, done) = env.step(&state, &action)?;
        transitions.push(Transition {
            state: state.observation.clone(),
            action,
            reward,
            next_state: next.observation.clone(),
            terminal: done,
        });
        if done {
            break;
        }
        state = next;
    }
    Trajectory::from_transitions(transitions)
}

/// Per-objective shift making every return non-negative: zero where the
/// dataset minimum is already non-negative.
pub fn objective_shift(trajectories: &[Trajectory], n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let min = trajectories
                .iter()
                .map(|t| t.episode_return[j])
                .fold(f64::INFINITY, f64::min);
            if min < 0.0 {
                -min + SHIFT_EPS
            } else {
                0.0
            }
        })
        .collect()
}

/// Behavior preference estimate: the L1-normalized shifted episode return.
pub fn approx_behavior_pref(traj: &Trajectory, shift: &[f64]) -> Result<Preference> {
    let ret = &traj.episode_return;
    if shift.len() != ret.dim() {
        return Err(Error::invalid("shift dimension does not match the return"));
    }
    let shifted = VectorReturn::new(ret.values().iter().zip(shift).map(|(r, s)| r + s).collect());
    l1_normalize(&shifted)
}

/// Annotation used for stored datasets: all-zero returns carry no preference
/// information and are annotated with the uniform preference.
pub fn annotate(traj: &Trajectory, shift: &[f64]) -> Result<Preference> {
    match approx_behavior_pref(traj, shift) {
        Err(Error::DegenerateReturn(v)) if v.iter().all(|x| *x == 0.0) => Preference::uniform(v.len()),
        other => other,
    }
}

impl OfflineDataset {
    /// Builds a dataset, computing the objective shift and annotations.
    pub fn from_trajectories(env_name: &str, trajectories: Vec<Trajectory>) -> Result<Self> {
        let n = trajectories
            .first()
            .map(|t| t.episode_return.dim())
            .ok_or_else(|| Error::invalid("dataset needs at least one trajectory"))?;
        let shift = objective_shift(&trajectories, n);
        Self::with_shift(env_name, trajectories, shift)
    }

    pub fn with_shift(env_name: &str, trajectories: Vec<Trajectory>, objective_shift: Vec<f64>) -> Result<Self> {
        let n = objective_shift.len();
        let mut approx_prefs = Vec::with_capacity(trajectories.len());
        for (i, t) in trajectories.iter().enumerate() {
            if t.episode_return.dim() != n {
                return Err(Error::Integrity(format!(
                    "trajectory {i} has {} objectives, expected {n}",
                    t.episode_return.dim()
                )));
            }
            t.validate()?;
            approx_prefs.push(annotate(t, &objective_shift)?);
        }
        Ok(Self {
            env_name: env_name.to_string(),
            n_objectives: n,
            objective_shift,
            trajectories,
            approx_prefs,
            warning: None,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            env_name: self.env_name.clone(),
            n_objectives: self.n_objectives,
            objective_shift: self.objective_shift.clone(),
            trajectories: indices.iter().map(|&i| self.trajectories[i].clone()).collect(),
            approx_prefs: indices.iter().map(|&i| self.approx_prefs[i].clone()).collect(),
            warning: None,
        }
    }

    /// Concatenates two datasets for the same environment. Annotations are
    /// recomputed under a common shift.
    pub fn merge(&self, other: &OfflineDataset) -> Result<Self> {
        if self.env_name != other.env_name || self.n_objectives != other.n_objectives {
            return Err(Error::invalid("cannot merge datasets from different environments"));
        }
        let mut all = self.trajectories.clone();
        all.extend(other.trajectories.iter().cloned());
        Self::from_trajectories(&self.env_name, all)
    }
}

fn check_target(ds: &OfflineDataset, target: &Preference) -> Result<()> {
    if target.dim() != ds.n_objectives {
        return Err(Error::invalid(format!(
            "target preference has {} objectives, dataset has {}",
            target.dim(),
            ds.n_objectives
        )));
    }
    Ok(())
}

/// Trajectories whose behavior preference lies within cosine distance `2θ` of `target`.
pub fn filter_subdataset(ds: &OfflineDataset, target: &Preference, theta: f64) -> Result<OfflineDataset> {
    check_target(ds, target)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")));
    }
    let mut keep = Vec::new();
    for (i, p) in ds.approx_prefs.iter().enumerate() {
        if cosine_distance(target, p)? <= 2.0 * theta + FILTER_TOL {
            keep.push(i);
        }
    }
    let mut out = ds.subset(&keep);
    if out.is_empty() {
        let msg = format!("no trajectory within cosine distance {} of {target}", 2.0 * theta);
        log::warn!("{msg}");
        out.warning = Some(msg);
    }
    Ok(out)
}

/// The `⌈ratio·|D|⌉` trajectories nearest to `target` in cosine distance,
/// ties broken by index, returned in dataset order.
pub fn ratio_subdataset(ds: &OfflineDataset, target: &Preference, ratio: f64) -> Result<OfflineDataset> {
    check_target(ds, target)?;
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    let k = (ratio * ds.len() as f64).ceil() as usize;
    if k == 0 {
        return Err(Error::invalid("ratio selects no trajectories"));
    }
    let mut ranked: Vec<(f64, usize)> = ds
        .approx_prefs
        .iter()
        .enumerate()
        .map(|(i, p)| cosine_distance(target, p).map(|d| (d, i)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep: Vec<usize> = ranked[..k.min(ranked.len())].iter().map(|x| x.1).collect();
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}
