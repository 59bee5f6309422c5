//! Shared drivers for the end-to-end checks: dataset recipes, corner and
//! front evaluation, the chain-MDP critic oracle and the adaptation and
//! ablation comparisons. Used by the acceptance tests and `offmorl repro`.

mod bimodal;
mod chain;
mod config;
mod front;
mod oracles;
mod run;
mod suite;

pub use bimodal::{bimodal_fit, BimodalConfig, BimodalReport};
pub use chain::{chain_prefs, chain_step, chain_value_iteration, fit_chain_critic, ChainConfig, ChainReport};
pub use oracles::{gradient_suite, metric_oracles, GradientCase, MetricOracleReport};
pub use config::{CqlDefaults, EnvDefaults, EtaTable, EvalDefaults, LINEWORLD_TOML, TREASURE_TOML};
pub use run::{run_suite, SuiteOutputs, SuiteTimings};
pub use suite::{
    ablation, adaptation_ordering, corner_runs, front_quality, grid_wbc, mean_std, toy_defaults, AblationReport, AblationRun,
    AdaptationReport, AdaptationRun, CornerReport, CornerRun, FrontQualityReport, SuiteConfig,
};
pub use front::{choose_wbc, evaluate_front, recovered_points, within_relative, FrontReport, WbcMode, RECOVERY_TOL};

use crate::dataset::{generate_dataset, GenerateConfig, OfflineDataset, PrefSampler};
use crate::envs::Env;
use crate::error::Result;
use crate::momdp::{scalarize, Preference};
use crate::trainer::{evaluate_policy, PreferencePolicy};

/// SHA-256 of the JSON form of `value`.
pub fn config_hash<T: serde::Serialize>(value: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(value).map_err(|e| crate::Error::invalid(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&json)))
}

/// Expert trajectories alternating between the two corner preferences.
pub fn mixed_corner_dataset(env: &Env, n_traj: usize, seed: u64) -> Result<OfflineDataset> {
    generate_dataset(
        env,
        &GenerateConfig {
            n_traj,
            quality_mix: 1.0,
            noise_scale: 0.0,
            pref_sampler: PrefSampler::CornerMixture,
            seed,
        },
    )
}

/// Expert trajectories under uniformly drawn preferences.
pub fn expert_dataset(env: &Env, n_traj: usize, seed: u64) -> Result<OfflineDataset> {
    generate_dataset(
        env,
        &GenerateConfig {
            n_traj,
            quality_mix: 1.0,
            noise_scale: 0.0,
            pref_sampler: PrefSampler::UniformSimplex,
            seed,
        },
    )
}

/// Noisy behavior under uniformly drawn preferences, a quarter of it expert.
pub fn amateur_dataset(env: &Env, n_traj: usize, seed: u64) -> Result<OfflineDataset> {
    generate_dataset(
        env,
        &GenerateConfig {
            n_traj,
            quality_mix: 0.25,
            noise_scale: 0.5,
            pref_sampler: PrefSampler::UniformSimplex,
            seed,
        },
    )
}

/// Scalarized utility at each simplex corner, averaged over `episodes`.
pub fn corner_utilities<P: PreferencePolicy + ?Sized>(policy: &P, env: &Env, wbc: f64, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let n = env.spec().n_objectives;
    let corners = (0..n).map(|i| Preference::corner(n, i)).collect::<Result<Vec<_>>>()?;
    evaluate_policy(policy, env, &corners, episodes, &vec![wbc; n], seed)?
        .iter()
        .map(|(p, r)| scalarize(p, r))
        .collect()
}

/// Best achievable utility at each corner.
pub fn oracle_corner_utilities(env: &Env) -> Result<Vec<f64>> {
    let n = env.spec().n_objectives;
    let front = env.oracle_pareto_front()?;
    (0..n)
        .map(|i| {
            let c = Preference::corner(n, i)?;
            front
                .iter()
                .map(|r| scalarize(&c, r))
                .try_fold(f64::NEG_INFINITY, |m, u| u.map(|u| m.max(u)))
        })
        .collect()
}
