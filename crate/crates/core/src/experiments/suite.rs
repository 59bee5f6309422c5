//! Training-based checks: PrefID and expressiveness trends on the
//! mixed-corner data, front quality of the full pipeline, adaptation
//! ordering and the exclusion ablation table.

use serde::{Deserialize, Serialize};

use super::config::EnvDefaults;
use super::front::{choose_wbc, evaluate_front, FrontReport, WbcMode};
use super::{amateur_dataset, corner_utilities, expert_dataset, mixed_corner_dataset, oracle_corner_utilities};
use crate::adaptation::{adapt, oracle_wbc, wbc_grid};
use crate::baselines::{train_bc_p, train_mo_cql, CqlConfig};
use crate::envs::{Env, LINEWORLD, TREASURE};
use crate::error::{Error, Result};
use crate::metrics::FrontMetrics;
use crate::momdp::{preference_grid, VectorReturn};
use crate::regularizers::Family;
use crate::trainer::{evaluate_policy, train, PolicyBundle, PreferencePolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub seeds: Vec<u64>,
    pub dataset_seed: u64,
    pub prefid_iterations: usize,
    pub front_iterations: usize,
    pub ablation_iterations: usize,
    pub mixed_traj: usize,
    pub expert_traj: usize,
    pub amateur_traj: usize,
    pub corner_episodes: usize,
    /// Weight of the Fixed setting, also used for corner evaluations.
    pub fixed_wbc: f64,
    pub adapt_prefs: usize,
    pub oracle_grid: usize,
    pub ablation_prefs: usize,
    /// Random networks per loss in the gradient check.
    pub gradient_nets: usize,
}

impl SuiteConfig {
    pub fn desk() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            dataset_seed: 0,
            prefid_iterations: 20_000,
            front_iterations: 50_000,
            ablation_iterations: 5_000,
            mixed_traj: 100,
            expert_traj: 500,
            amateur_traj: 200,
            corner_episodes: 5,
            fixed_wbc: 0.6,
            adapt_prefs: 11,
            oracle_grid: 20,
            ablation_prefs: 21,
            gradient_nets: 20,
        }
    }

    pub fn smoke() -> Self {
        Self {
            seeds: vec![0],
            prefid_iterations: 2_000,
            front_iterations: 2_000,
            ablation_iterations: 2_000,
            ..Self::desk()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerRun {
    pub seed: u64,
    pub family: Family,
    pub theta: f64,
    pub utilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerReport {
    pub oracle: Vec<f64>,
    pub runs: Vec<CornerRun>,
}

impl CornerReport {
    /// Per-corner utility averaged over seeds.
    pub fn mean(&self, family: Family, theta: f64) -> Vec<f64> {
        let rs: Vec<&CornerRun> = self.runs.iter().filter(|r| r.family == family && r.theta == theta).collect();
        let n = self.oracle.len();
        (0..n)
            .map(|j| rs.iter().map(|r| r.utilities[j]).sum::<f64>() / rs.len().max(1) as f64)
            .collect()
    }
}

/// MSE at θ ∈ {0, 1} and diffusion at θ = 1 on the mixed-corner data, one
/// run per seed. Also returns the MSE θ = 0 bundles for the adaptation check.
pub fn corner_runs(cfg: &SuiteConfig, defaults: &EnvDefaults) -> Result<(CornerReport, Vec<PolicyBundle>)> {
    let env = Env::by_name(&defaults.train.env_name)?;
    let ds = mixed_corner_dataset(&env, cfg.mixed_traj, cfg.dataset_seed)?;
    let mut runs = Vec::new();
    let mut kept = Vec::new();
    for &seed in &cfg.seeds {
        for (family, theta) in [(Family::Mse, 0.0), (Family::Mse, 1.0), (Family::Diffusion, 1.0)] {
            let (b, _) = train(defaults.train_config(family, theta, cfg.prefid_iterations, seed), &ds)?;
            let utilities = corner_utilities(&b, &env, cfg.fixed_wbc, cfg.corner_episodes, seed)?;
            runs.push(CornerRun {
                seed,
                family,
                theta,
                utilities,
            });
            if family == Family::Mse && theta == 0.0 {
                kept.push(b);
            }
        }
    }
    Ok((
        CornerReport {
            oracle: oracle_corner_utilities(&env)?,
            runs,
        },
        kept,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRun {
    pub seed: u64,
    pub eu_fixed: f64,
    pub eu_adapted: f64,
    pub eu_oracle: f64,
    /// Mean rollout utility of each adaptation iteration, averaged over
    /// the evaluation preferences.
    pub adapting_utility: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub runs: Vec<AdaptationRun>,
}

/// Fixed, Adapted and Oracle weight settings on `adapt_prefs` evaluation
/// preferences, each evaluated with `corner_episodes` rollouts.
pub fn adaptation_ordering<P: PreferencePolicy>(
    cfg: &SuiteConfig,
    defaults: &EnvDefaults,
    policies: &[P],
) -> Result<AdaptationReport> {
    if policies.len() != cfg.seeds.len() {
        return Err(Error::invalid("one policy per seed is required"));
    }
    let env = Env::by_name(&defaults.train.env_name)?;
    let prefs = preference_grid(env.spec().n_objectives, cfg.adapt_prefs)?;
    let grid = wbc_grid(cfg.oracle_grid, defaults.adapt.lower, defaults.adapt.upper)?;
    let episodes = cfg.corner_episodes;
    let mut runs = Vec::new();
    for (policy, &seed) in policies.iter().zip(&cfg.seeds) {
        let eu = |wbc: &[f64]| -> Result<f64> {
            let evals = evaluate_policy(policy, &env, &prefs, episodes, wbc, seed)?;
            crate::metrics::expected_utility(&evals)
        };
        let fixed = vec![cfg.fixed_wbc; prefs.len()];
        let mut adapted = Vec::with_capacity(prefs.len());
        let mut per_iter = vec![0.0; defaults.adapt.n_iters];
        for (k, p) in prefs.iter().enumerate() {
            let r = adapt(policy, &env, p, &defaults.adapt, seed.wrapping_add(k as u64))?;
            for (acc, it) in per_iter.iter_mut().zip(&r.iterations) {
                *acc += it.mean_utility / prefs.len() as f64;
            }
            adapted.push(r.final_wbc);
        }
        let oracle = prefs
            .iter()
            .map(|p| oracle_wbc(policy, &env, p, &grid, episodes, seed).map(|(w, _)| w))
            .collect::<Result<Vec<_>>>()?;
        runs.push(AdaptationRun {
            seed,
            eu_fixed: eu(&fixed)?,
            eu_adapted: eu(&adapted)?,
            eu_oracle: eu(&oracle)?,
            adapting_utility: per_iter,
        });
    }
    Ok(AdaptationReport { runs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontQualityReport {
    pub env_name: String,
    pub family: Family,
    pub runs: Vec<(u64, FrontReport)>,
}

impl FrontQualityReport {
    pub fn mean_hv_ratio(&self) -> f64 {
        self.runs.iter().map(|(_, r)| r.hv_ratio).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn mean_recovered(&self) -> f64 {
        self.runs.iter().map(|(_, r)| r.recovered as f64).sum::<f64>() / self.runs.len().max(1) as f64
    }
}

/// Diffusion family trained at θ = 0 on expert data, adapted per
/// preference and evaluated on the default grid.
pub fn front_quality(cfg: &SuiteConfig, defaults: &EnvDefaults) -> Result<FrontQualityReport> {
    let env = Env::by_name(&defaults.train.env_name)?;
    let ds = expert_dataset(&env, cfg.expert_traj, cfg.dataset_seed)?;
    let family = Family::Diffusion;
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let (b, _) = train(defaults.train_config(family, 0.0, cfg.front_iterations, seed), &ds)?;
        let r = evaluate_front(&b, &env, defaults.eval.prefs, defaults.eval.episodes, &WbcMode::Adapt(defaults.adapt), seed)?;
        runs.push((seed, r));
    }
    Ok(FrontQualityReport {
        env_name: env.spec().name.clone(),
        family,
        runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub algorithm: String,
    pub theta: Option<f64>,
    pub seed: u64,
    /// `None` when training diverged.
    pub metrics: Option<FrontMetrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub env_name: String,
    pub dataset_hv: f64,
    pub runs: Vec<AblationRun>,
}

impl AblationReport {
    pub fn diverged(&self) -> usize {
        self.runs.iter().filter(|r| r.metrics.is_none()).count()
    }

    /// Rows of `(algorithm, θ, mean hv, std hv, mean eu, std eu)` over seeds.
    pub fn table(&self) -> Vec<(String, Option<f64>, f64, f64, f64, f64)> {
        let mut keys: Vec<(String, Option<f64>)> = Vec::new();
        for r in &self.runs {
            let k = (r.algorithm.clone(), r.theta);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(a, t)| {
                let ms: Vec<&FrontMetrics> = self
                    .runs
                    .iter()
                    .filter(|r| r.algorithm == a && r.theta == t)
                    .filter_map(|r| r.metrics.as_ref())
                    .collect();
                let (hm, hs) = mean_std(&ms.iter().map(|m| m.hv).collect::<Vec<_>>());
                let (em, es) = mean_std(&ms.iter().map(|m| m.eu).collect::<Vec<_>>());
                (a, t, hm, hs, em, es)
            })
            .collect()
    }
}

/// Mean and sample standard deviation; NaN for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let s = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

/// MO-CQL and every regularizer family at θ ∈ {0, 1}, plus BC(P), on
/// amateur-quality data. Divergence is recorded, not propagated.
pub fn ablation(cfg: &SuiteConfig, defaults: &EnvDefaults) -> Result<AblationReport> {
    let env = Env::by_name(&defaults.train.env_name)?;
    let ds = amateur_dataset(&env, cfg.amateur_traj, cfg.dataset_seed)?;
    let n = env.spec().n_objectives;
    let r0 = VectorReturn::zeros(n);
    let data_front: Vec<VectorReturn> = ds.trajectories.iter().map(|t| t.episode_return.clone()).collect();
    let dataset_hv = crate::metrics::hypervolume(&crate::metrics::ParetoFront::new(&data_front, r0.clone())?)?;
    let prefs = preference_grid(n, cfg.ablation_prefs)?;
    let wbc = vec![cfg.fixed_wbc; prefs.len()];
    let score = |p: &dyn PreferencePolicy, seed: u64| -> Result<FrontMetrics> {
        FrontMetrics::compute(&evaluate_policy(p, &env, &prefs, 1, &wbc, seed)?, &r0)
    };
    let record = |algorithm: &str, theta: Option<f64>, seed: u64, out: Result<FrontMetrics>| -> Result<AblationRun> {
        match out {
            Ok(m) => Ok(AblationRun {
                algorithm: algorithm.into(),
                theta,
                seed,
                metrics: Some(m),
                error: None,
            }),
            Err(e @ Error::Diverged { .. }) => Ok(AblationRun {
                algorithm: algorithm.into(),
                theta,
                seed,
                metrics: None,
                error: Some(e.to_string()),
            }),
            Err(e) => Err(e),
        }
    };
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        for theta in [0.0, 1.0] {
            let mut cql = CqlConfig {
                train: defaults.train_config(Family::Mse, theta, cfg.ablation_iterations, seed),
                alpha: defaults.mo_cql.alpha,
            };
            cql.train.eta = None;
            let out = train_mo_cql(cql, &ds).and_then(|(b, _)| score(&b, seed));
            runs.push(record("mo-cql", Some(theta), seed, out)?);
            for family in Family::ALL {
                let c = defaults.train_config(family, theta, cfg.ablation_iterations, seed);
                let out = train(c, &ds).and_then(|(b, _)| score(&b, seed));
                runs.push(record(family.name(), Some(theta), seed, out)?);
            }
        }
        let c = defaults.train_config(Family::Mse, 0.0, cfg.ablation_iterations, seed);
        let out = train_bc_p(c, &ds).and_then(|(b, _)| score(&b, seed));
        runs.push(record("bc-p", None, seed, out)?);
    }
    Ok(AblationReport {
        env_name: env.spec().name.clone(),
        dataset_hv,
        runs,
    })
}

/// Built-in defaults for the two toy environments.
pub fn toy_defaults() -> Result<(EnvDefaults, EnvDefaults)> {
    Ok((EnvDefaults::builtin(LINEWORLD)?, EnvDefaults::builtin(TREASURE)?))
}

/// Weights chosen by `mode` for each preference of an `n`-point grid.
pub fn grid_wbc<P: PreferencePolicy + ?Sized>(policy: &P, env: &Env, n: usize, mode: &WbcMode, seed: u64) -> Result<Vec<f64>> {
    choose_wbc(policy, env, &preference_grid(env.spec().n_objectives, n)?, mode, seed)
}
