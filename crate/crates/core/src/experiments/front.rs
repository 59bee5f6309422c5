//! Deployment pipeline on an evaluation grid: per-preference weight
//! adaptation, rollouts, front metrics and comparison with the oracle front.

use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt, AdaptConfig};
use crate::envs::Env;
use crate::error::Result;
use crate::metrics::{hypervolume, FrontMetrics, ParetoFront};
use crate::momdp::{preference_grid, Preference, VectorReturn};
use crate::trainer::{evaluate_policy, PreferencePolicy};

/// How the cloning weight is chosen per evaluation preference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WbcMode {
    Fixed(f64),
    Adapt(AdaptConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    pub prefs: Vec<Vec<f64>>,
    pub wbc: Vec<f64>,
    pub returns: Vec<Vec<f64>>,
    pub metrics: FrontMetrics,
    pub oracle_hv: f64,
    pub hv_ratio: f64,
    /// Oracle points matched by some evaluated return.
    pub recovered: usize,
    pub n_oracle: usize,
}

/// Per-preference cloning weights. Adaptation for preference `k` uses seed
/// `seed + k`.
pub fn choose_wbc<P: PreferencePolicy + ?Sized>(policy: &P, env: &Env, prefs: &[Preference], mode: &WbcMode, seed: u64) -> Result<Vec<f64>> {
    match mode {
        WbcMode::Fixed(w) => Ok(vec![*w; prefs.len()]),
        WbcMode::Adapt(cfg) => prefs
            .iter()
            .enumerate()
            .map(|(k, p)| adapt(policy, env, p, cfg, seed.wrapping_add(k as u64)).map(|r| r.final_wbc))
            .collect(),
    }
}

/// Whether `got` lies within `tol` relative error of `want` in every objective.
pub fn within_relative(got: &VectorReturn, want: &VectorReturn, tol: f64) -> bool {
    got.values()
        .iter()
        .zip(want.values())
        .all(|(g, w)| (g - w).abs() <= tol * w.abs())
}

pub fn recovered_points(oracle: &[VectorReturn], returns: &[VectorReturn], tol: f64) -> usize {
    oracle
        .iter()
        .filter(|o| returns.iter().any(|r| within_relative(r, o, tol)))
        .count()
}

/// Recovery tolerance for oracle points.
pub const RECOVERY_TOL: f64 = 0.05;

/// Evaluates `policy` on an `n_prefs` grid with `episodes` rollouts each and
/// scores the result against the oracle front with the origin as reference.
pub fn evaluate_front<P: PreferencePolicy + ?Sized>(
    policy: &P,
    env: &Env,
    n_prefs: usize,
    episodes: usize,
    mode: &WbcMode,
    seed: u64,
) -> Result<FrontReport> {
    let n = env.spec().n_objectives;
    let prefs = preference_grid(n, n_prefs)?;
    let wbc = choose_wbc(policy, env, &prefs, mode, seed)?;
    let evals = evaluate_policy(policy, env, &prefs, episodes, &wbc, seed)?;
    let r0 = VectorReturn::zeros(n);
    let metrics = FrontMetrics::compute(&evals, &r0)?;
    let oracle = env.oracle_pareto_front()?;
    let oracle_hv = hypervolume(&ParetoFront::new(&oracle, r0)?)?;
    let returns: Vec<VectorReturn> = evals.iter().map(|(_, r)| r.clone()).collect();
    Ok(FrontReport {
        prefs: prefs.iter().map(|p| p.weights().to_vec()).collect(),
        wbc,
        recovered: recovered_points(&oracle, &returns, RECOVERY_TOL),
        n_oracle: oracle.len(),
        returns: returns.iter().map(|r| r.values().to_vec()).collect(),
        hv_ratio: metrics.hv / oracle_hv,
        metrics,
        oracle_hv,
    })
}
