//! `repro`: the full check suite, summarized as markdown tables.

use std::fmt::Write as _;

use anyhow::{Context, Result};
use offmorl_core::experiments::{config_hash, mean_std, run_suite, SuiteConfig, SuiteOutputs};
use offmorl_core::regularizers::Family;
use offmorl_core::Error;
use serde::Serialize;

use crate::run::{open_run, run_dir, write, write_json, CODE_VERSION};
use crate::{ReproArgs, SuiteArg};

#[derive(Serialize)]
struct Results<'a> {
    config_hash: &'a str,
    seeds: &'a [u64],
    reference_point: [f64; 2],
    code_version: &'a str,
    outputs: &'a SuiteOutputs,
}

fn pm(xs: &[f64], digits: usize) -> String {
    let (m, s) = mean_std(xs);
    format!("{m:.digits$} ± {s:.digits$}")
}

/// Markdown tables of every suite result, mean ± std over seeds.
pub fn tables(cfg: &SuiteConfig, o: &SuiteOutputs) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Results\n\nSeeds {:?}; means ± standard deviations over seeds.\n", cfg.seeds);

    let m = &o.metric;
    let _ = writeln!(s, "## Oracle checks\n\n| check | result |\n|---|---|");
    let _ = writeln!(s, "| hypervolume vs Monte Carlo | worst \\|z\\| {:.2} over {} fronts |", m.hv_worst_z, m.hv_fronts);
    let _ = writeln!(s, "| sparsity vs hand formula | {} mismatches in {} fronts |", m.sp_mismatches, m.sp_fronts);
    let _ = writeln!(s, "| Pareto filter vs brute force | {} mismatches in {} sets |", m.filter_mismatches, m.filter_sets);
    for g in &o.gradient {
        let _ = writeln!(s, "| gradient of {} ({} nets) | worst relative error {:.1e} |", g.loss, g.nets, g.worst_rel_error);
    }
    let _ = writeln!(s, "| chain-MDP critic vs value iteration | max error {:.2e} |", o.chain.max_abs_error);
    let b = &o.bimodal;
    let _ = writeln!(
        s,
        "| diffusion fit of a two-mode target | {:.3} near a mode, mode masses {:.3} / {:.3} |\n",
        b.near, b.plus, b.minus
    );

    let c = &o.corners;
    let _ = writeln!(s, "## Corner utilities on mixed-corner data (mo-lineworld)\n");
    let _ = writeln!(s, "| policy | θ | utility at [1,0] | utility at [0,1] |\n|---|---|---|---|");
    for (family, theta) in [(Family::Mse, 0.0), (Family::Mse, 1.0), (Family::Diffusion, 1.0)] {
        let runs: Vec<_> = c.runs.iter().filter(|r| r.family == family && r.theta == theta).collect();
        let col = |j: usize| runs.iter().map(|r| r.utilities[j]).collect::<Vec<_>>();
        let _ = writeln!(s, "| {} | {theta} | {} | {} |", family.name(), pm(&col(0), 2), pm(&col(1), 2));
    }
    let _ = writeln!(s, "| oracle | - | {:.2} | {:.2} |\n", c.oracle[0], c.oracle[1]);

    let _ = writeln!(s, "## Learned fronts (diffusion, θ = 0, adapted weights)\n");
    let _ = writeln!(s, "| env | HV | HV / oracle | SP | EU | oracle points recovered |\n|---|---|---|---|---|---|");
    for f in [&o.front_lineworld, &o.front_treasure] {
        let col = |g: &dyn Fn(&offmorl_core::experiments::FrontReport) -> f64| f.runs.iter().map(|(_, r)| g(r)).collect::<Vec<_>>();
        let n_oracle = f.runs.first().map_or(0, |(_, r)| r.n_oracle);
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} of {n_oracle} |",
            f.env_name,
            pm(&col(&|r| r.metrics.hv), 2),
            pm(&col(&|r| r.hv_ratio), 3),
            pm(&col(&|r| r.metrics.sp_filtered), 4),
            pm(&col(&|r| r.metrics.eu), 3),
            pm(&col(&|r| r.recovered as f64), 1)
        );
    }

    let a = &o.adaptation;
    let col = |g: &dyn Fn(&offmorl_core::experiments::AdaptationRun) -> f64| a.runs.iter().map(g).collect::<Vec<_>>();
    let _ = writeln!(s, "\n## Cloning-weight settings (mo-lineworld, expected utility)\n");
    let _ = writeln!(s, "| Fixed ({}) | Adapted | Oracle (grid {}) |\n|---|---|---|", cfg.fixed_wbc, cfg.oracle_grid);
    let _ = writeln!(
        s,
        "| {} | {} | {} |\n",
        pm(&col(&|r| r.eu_fixed), 3),
        pm(&col(&|r| r.eu_adapted), 3),
        pm(&col(&|r| r.eu_oracle), 3)
    );

    let ab = &o.ablation;
    let _ = writeln!(
        s,
        "## Amateur data on {} (dataset HV {:.2})\n\n| algorithm | θ | HV | EU |\n|---|---|---|---|",
        ab.env_name, ab.dataset_hv
    );
    for (alg, theta, hm, hs, em, es) in ab.table() {
        let th = theta.map_or("-".to_string(), |t| t.to_string());
        let _ = writeln!(s, "| {alg} | {th} | {hm:.2} ± {hs:.2} | {em:.3} ± {es:.3} |");
    }
    if ab.diverged() > 0 {
        let _ = writeln!(s, "\n{} runs diverged and are left out of the means.", ab.diverged());
    }
    s
}

pub fn run(a: ReproArgs) -> Result<()> {
    let (name, cfg) = match a.suite {
        SuiteArg::Smoke => ("smoke", SuiteConfig::smoke()),
        SuiteArg::Desk => ("desk", SuiteConfig::desk()),
    };
    let hash = config_hash(&cfg)?;
    let dir = run_dir(a.out.as_deref(), &format!("repro-{name}"), &hash);
    open_run(&dir, "repro", &cfg, cfg.seeds[0])?;
    let written = std::fs::read_to_string(dir.join("config.toml")).context("re-reading config.toml")?;
    let reread: SuiteConfig = toml::from_str(&written).map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
    if config_hash(&reread)? != hash {
        return Err(Error::Integrity("config hash changed after writing the resolved config".into()).into());
    }
    log::info!("running the {name} suite into {}", dir.display());
    let (outputs, timings) = run_suite(&cfg)?;
    write_json(
        &dir.join("results.json"),
        &Results {
            config_hash: &hash,
            seeds: &cfg.seeds,
            reference_point: [0.0, 0.0],
            code_version: CODE_VERSION,
            outputs: &outputs,
        },
    )?;
    write_json(&dir.join("timings.json"), &timings)?;
    write(dir.join("results.md"), &tables(&cfg, &outputs))?;
    println!("{}", dir.join("results.md").display());
    Ok(())
}
