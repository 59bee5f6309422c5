//! The whole check suite in one call, with per-stage wall time.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::suite::{ablation, adaptation_ordering, corner_runs, front_quality, toy_defaults};
use super::{
    bimodal_fit, expert_dataset, fit_chain_critic, gradient_suite, metric_oracles, AblationReport, AdaptationReport,
    BimodalConfig, BimodalReport, ChainConfig, ChainReport, CornerReport, FrontQualityReport, GradientCase,
    MetricOracleReport, SuiteConfig,
};
use crate::envs::{Env, LINEWORLD};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutputs {
    pub metric: MetricOracleReport,
    pub gradient: Vec<GradientCase>,
    pub chain: ChainReport,
    pub corners: CornerReport,
    pub bimodal: BimodalReport,
    pub front_lineworld: FrontQualityReport,
    pub front_treasure: FrontQualityReport,
    pub adaptation: AdaptationReport,
    pub ablation: AblationReport,
}

/// Seconds spent per stage. Not part of the outputs since it varies run to run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SuiteTimings {
    pub metric: f64,
    pub gradient: f64,
    pub chain: f64,
    pub corners: f64,
    pub bimodal: f64,
    pub fronts: f64,
    pub adaptation: f64,
    pub ablation: f64,
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<(SuiteOutputs, SuiteTimings)> {
    let (lw, tr) = toy_defaults()?;
    let env = Env::by_name(LINEWORLD)?;
    let mut t = SuiteTimings::default();
    let mut clock = Instant::now();
    let mut lap = || {
        let s = clock.elapsed().as_secs_f64();
        clock = Instant::now();
        s
    };
    let metric = metric_oracles(cfg.dataset_seed)?;
    t.metric = lap();
    let gradient = gradient_suite(cfg.gradient_nets, &expert_dataset(&env, 20, cfg.dataset_seed)?, cfg.dataset_seed)?;
    t.gradient = lap();
    let chain = fit_chain_critic(&ChainConfig::default())?;
    t.chain = lap();
    let (corners, mse_bundles) = corner_runs(cfg, &lw)?;
    t.corners = lap();
    let bimodal = bimodal_fit(&BimodalConfig::default())?;
    t.bimodal = lap();
    let front_lineworld = front_quality(cfg, &lw)?;
    let front_treasure = front_quality(cfg, &tr)?;
    t.fronts = lap();
    let adaptation = adaptation_ordering(cfg, &lw, &mse_bundles)?;
    t.adaptation = lap();
    let ablation = ablation(cfg, &lw)?;
    t.ablation = lap();
    Ok((
        SuiteOutputs {
            metric,
            gradient,
            chain,
            corners,
            bimodal,
            front_lineworld,
            front_treasure,
            adaptation,
            ablation,
        },
        t,
    ))
}

impl SuiteOutputs {
    /// The per-seed parts restricted to `seed`; seed-independent parts are kept.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut o = self.clone();
        o.corners.runs.retain(|r| r.seed == seed);
        o.front_lineworld.runs.retain(|r| r.0 == seed);
        o.front_treasure.runs.retain(|r| r.0 == seed);
        o.adaptation.runs.retain(|r| r.seed == seed);
        o.ablation.runs.retain(|r| r.seed == seed);
        o
    }
}
