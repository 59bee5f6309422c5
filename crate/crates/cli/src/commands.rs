use std::path::Path;

use anyhow::{Context, Result};
use offmorl_core::adaptation::{adapt as adapt_weight, oracle_wbc, wbc_grid, AdaptConfig, AdaptationReport};
use offmorl_core::baselines::{train_bc_p, train_mo_cql, CqlConfig, LoadedPolicy};
use offmorl_core::dataset::{generate_dataset, load_dataset, save_dataset, GenerateConfig, PrefSampler};
use offmorl_core::envs::Env;
use offmorl_core::experiments::{config_hash, recovered_points, EnvDefaults, RECOVERY_TOL};
use offmorl_core::metrics::{hypervolume, FrontMetrics, ParetoFront};
use offmorl_core::momdp::preference_grid;
use offmorl_core::nn::read_checkpoint;
use offmorl_core::regularizers::Family;
use offmorl_core::trainer::{evaluate_policy, train as train_regularized, LogRow, PreferencePolicy, TrainConfig, LOG_HEADER};
use offmorl_core::{Error, Preference, VectorReturn};
use serde::{Deserialize, Serialize};

use crate::run::{open_run, run_dir, write, write_json, CODE_VERSION};
use crate::spec::{parse_pref, WbcSpec};
use crate::{AdaptArgs, EvalArgs, GenDataArgs, OracleArgs, QualityArg, TrainArgs, UsageError};

#[derive(Serialize)]
struct GenDataConfig<'a> {
    env: &'a str,
    generate: &'a GenerateConfig,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: GenDataConfig<'a>,
    config_hash: String,
    seed: u64,
    code_version: &'a str,
    n_trajectories: usize,
    n_transitions: usize,
    objective_shift: &'a [f64],
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let env = Env::by_name(&a.env)?;
    let pref_sampler: PrefSampler = a.pref.parse()?;
    let generate = GenerateConfig {
        n_traj: a.n,
        quality_mix: a.expert_fraction.unwrap_or(match a.quality {
            QualityArg::Expert => 1.0,
            QualityArg::Amateur => 0.0,
        }),
        noise_scale: a.noise,
        pref_sampler,
        seed: a.seed,
    };
    let config = GenDataConfig {
        env: &a.env,
        generate: &generate,
    };
    let config_hash = config_hash(&config)?;
    let ds = generate_dataset(&env, &generate)?;
    save_dataset(&ds, &a.out)?;
    let manifest = Manifest {
        config,
        config_hash,
        seed: a.seed,
        code_version: CODE_VERSION,
        n_trajectories: ds.len(),
        n_transitions: ds.n_transitions(),
        objective_shift: &ds.objective_shift,
    };
    write_json(&a.out.with_extension("manifest.json"), &manifest)?;
    println!("{}", a.out.display());
    Ok(())
}

/// Training algorithm chosen with `--algo`.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Algo {
    Regularized(Family),
    MoCql,
    BcP,
}

impl Algo {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "mo-cql" => Algo::MoCql,
            "bc-p" => Algo::BcP,
            other => Algo::Regularized(
                other
                    .parse()
                    .map_err(|_| UsageError(format!("unknown --algo `{other}` (mse, cvae, diffusion, mo-cql, bc-p)")))?,
            ),
        })
    }

    fn name(self) -> &'static str {
        match self {
            Algo::Regularized(f) => f.name(),
            Algo::MoCql => "mo-cql",
            Algo::BcP => "bc-p",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrainRun {
    algo: String,
    data: String,
    n_trajectories: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    train: TrainConfig,
}

fn read_defaults(config: Option<&Path>, env_name: &str) -> Result<EnvDefaults> {
    let d = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            EnvDefaults::parse(&text)?
        }
        None => EnvDefaults::builtin(env_name)?,
    };
    if d.train.env_name != env_name {
        return Err(Error::InvalidConfiguration(format!(
            "config is for `{}` but the dataset is from `{env_name}`",
            d.train.env_name
        ))
        .into());
    }
    Ok(d)
}

fn write_log(dir: &Path, rows: &[LogRow]) -> Result<()> {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    write(dir.join("metrics.csv"), &s)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let d = read_defaults(a.config.as_deref(), &ds.env_name)?;
    let algo = match &a.algo {
        Some(s) => Algo::parse(s)?,
        None => Algo::Regularized(d.train.actor.family),
    };
    if a.alpha.is_some() && algo != Algo::MoCql {
        return Err(UsageError("--alpha only applies to --algo mo-cql".into()).into());
    }
    let family = match algo {
        Algo::Regularized(f) => f,
        _ => Family::Mse,
    };
    let mut train = d.train_config(
        family,
        a.theta.unwrap_or(d.train.theta),
        a.iterations.unwrap_or(d.train.total_iterations),
        a.seed.unwrap_or(d.train.seed),
    );
    train.eta = match algo {
        Algo::Regularized(_) => a.eta.or(train.eta),
        _ => None,
    };
    let alpha = (algo == Algo::MoCql).then(|| a.alpha.unwrap_or(d.mo_cql.alpha));
    train.validate()?;
    if let Some(alpha) = alpha {
        CqlConfig {
            train: train.clone(),
            alpha,
        }
        .validate()?;
    }
    let run = TrainRun {
        algo: algo.name().into(),
        data: a.data.display().to_string(),
        n_trajectories: ds.len(),
        alpha,
        train,
    };
    let dir = run_dir(a.out.as_deref(), algo.name(), &config_hash(&run)?);
    let hash = open_run(&dir, "train", &run, run.train.seed)?;
    let ckpt = dir.join("policy.ckpt");
    let train = run.train.clone();
    let rows = match algo {
        Algo::Regularized(_) => {
            let (b, rows) = train_regularized(train, &ds)?;
            b.save(&ckpt, &hash)?;
            rows
        }
        Algo::MoCql => {
            let (b, rows) = train_mo_cql(
                CqlConfig {
                    train,
                    alpha: alpha.unwrap_or_default(),
                },
                &ds,
            )?;
            b.save(&ckpt, &hash)?;
            rows
        }
        Algo::BcP => {
            let (b, rows) = train_bc_p(train, &ds)?;
            b.save(&ckpt, &hash)?;
            rows
        }
    };
    write_log(&dir, &rows)?;
    println!("{}", dir.display());
    Ok(())
}

fn adapt_defaults(env_name: &str) -> AdaptConfig {
    EnvDefaults::builtin(env_name).map(|d| d.adapt).unwrap_or_default()
}

fn load_policy(path: &Path) -> Result<(LoadedPolicy, Env, String)> {
    let policy = LoadedPolicy::load(path)?;
    let env = Env::by_name(&policy.spec().name)?;
    let hash = read_checkpoint(path)?.header.config_hash;
    Ok((policy, env, hash))
}

#[derive(Serialize)]
struct AdaptOutput<'a> {
    checkpoint: String,
    checkpoint_config_hash: &'a str,
    config_hash: String,
    seed: u64,
    code_version: &'a str,
    adapt: AdaptConfig,
    report: AdaptationReport,
}

pub fn adapt(a: AdaptArgs) -> Result<()> {
    let target = parse_pref(&a.pref).map_err(|e| UsageError(format!("--pref: {e}")))?;
    let (policy, env, ckpt_hash) = load_policy(&a.ckpt)?;
    if !policy.uses_wbc() {
        return Err(Error::Unsupported("this policy does not read a cloning weight".into()).into());
    }
    let cfg = a.adapt.apply(&adapt_defaults(&env.spec().name));
    cfg.validate()?;
    let report = adapt_weight(&policy, &env, &target, &cfg, a.seed)?;
    let out = AdaptOutput {
        checkpoint: a.ckpt.display().to_string(),
        checkpoint_config_hash: &ckpt_hash,
        config_hash: config_hash(&(&cfg, &target, a.seed, &ckpt_hash))?,
        seed: a.seed,
        code_version: CODE_VERSION,
        adapt: cfg,
        report,
    };
    match &a.out {
        Some(p) => write_json(p, &out)?,
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct EvalRun {
    pub checkpoint: String,
    pub checkpoint_config_hash: String,
    pub env: String,
    pub prefs: usize,
    pub episodes: usize,
    pub wbc: WbcSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapt: Option<AdaptConfig>,
    pub seed: u64,
}

/// Contents of `metrics.json` in an eval directory.
#[derive(Serialize, Deserialize)]
pub struct EvalOutput {
    pub config_hash: String,
    pub seed: u64,
    pub env: String,
    pub reference_point: Vec<f64>,
    pub prefs: Vec<Vec<f64>>,
    pub wbc: Vec<f64>,
    pub returns: Vec<Vec<f64>>,
    pub metrics: FrontMetrics,
    pub oracle_hv: f64,
    pub hv_ratio: f64,
    pub recovered: usize,
    pub n_oracle: usize,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (policy, env, ckpt_hash) = load_policy(&a.ckpt)?;
    let name = env.spec().name.clone();
    let defaults = EnvDefaults::builtin(&name).ok();
    let wbc = match (&a.wbc, &a.adapt) {
        (Some(WbcSpec::Adapt) | None, Some(_)) => WbcSpec::Adapt,
        (Some(_), Some(_)) => return Err(UsageError("--adapt conflicts with a non-adaptive --wbc".into()).into()),
        (Some(w), None) => w.clone(),
        (None, None) if policy.uses_wbc() => WbcSpec::Adapt,
        (None, None) => WbcSpec::Fixed(1.0),
    };
    let adaptive = matches!(wbc, WbcSpec::Adapt | WbcSpec::Oracle { .. });
    if adaptive && !policy.uses_wbc() {
        return Err(Error::Unsupported("this policy does not read a cloning weight".into()).into());
    }
    let adapt = adaptive.then(|| a.adapt.clone().unwrap_or_default().apply(&adapt_defaults(&name)));
    if let Some(c) = &adapt {
        c.validate()?;
    }
    let run = EvalRun {
        checkpoint: a.ckpt.display().to_string(),
        checkpoint_config_hash: ckpt_hash,
        env: name.clone(),
        prefs: a.prefs.or(defaults.as_ref().map(|d| d.eval.prefs)).unwrap_or(101),
        episodes: a.episodes.or(defaults.as_ref().map(|d| d.eval.episodes)).unwrap_or(5),
        wbc,
        adapt,
        seed: a.seed,
    };
    if run.episodes == 0 {
        return Err(Error::InvalidArgument("--episodes must be at least 1".into()).into());
    }
    let n = env.spec().n_objectives;
    let prefs = preference_grid(n, run.prefs)?;
    let dir = run_dir(a.out.as_deref(), "eval", &config_hash(&run)?);
    let hash = open_run(&dir, "eval", &run, run.seed)?;

    let weights = match (&run.wbc, &run.adapt) {
        (WbcSpec::Fixed(w), _) => vec![*w; prefs.len()],
        (WbcSpec::Adapt, Some(cfg)) => {
            let reports = prefs
                .iter()
                .enumerate()
                .map(|(k, p)| adapt_weight(&policy, &env, p, cfg, run.seed.wrapping_add(k as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            write_json(&dir.join("adaptation.json"), &reports)?;
            reports.iter().map(|r| r.final_wbc).collect()
        }
        (WbcSpec::Oracle { grid }, Some(cfg)) => {
            let grid = wbc_grid(*grid, cfg.lower, cfg.upper)?;
            let found = prefs
                .iter()
                .map(|p| oracle_wbc(&policy, &env, p, &grid, run.episodes, run.seed))
                .collect::<Result<Vec<_>, _>>()?;
            write_json(&dir.join("oracle_search.json"), &(&grid, &found))?;
            found.into_iter().map(|(w, _)| w).collect()
        }
        _ => unreachable!("adaptive settings always carry an adaptation config"),
    };
    let evals = evaluate_policy(&policy, &env, &prefs, run.episodes, &weights, run.seed)?;
    let r0 = VectorReturn::zeros(n);
    let metrics = FrontMetrics::compute(&evals, &r0)?;
    let oracle = env.oracle_pareto_front()?;
    let oracle_hv = hypervolume(&ParetoFront::new(&oracle, r0.clone())?)?;
    let returns: Vec<VectorReturn> = evals.iter().map(|(_, r)| r.clone()).collect();

    let mut csv = (1..=n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(",");
    csv.push_str(",wbc,");
    csv.push_str(&(1..=n).map(|i| format!("r{i}")).collect::<Vec<_>>().join(","));
    csv.push('\n');
    for ((p, r), w) in evals.iter().zip(&weights) {
        let cells: Vec<String> = p
            .weights()
            .iter()
            .map(|x| x.to_string())
            .chain(std::iter::once(w.to_string()))
            .chain(r.values().iter().map(|x| x.to_string()))
            .collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    write(dir.join("front.csv"), &csv)?;
    let out = EvalOutput {
        config_hash: hash,
        seed: run.seed,
        env: name,
        reference_point: r0.values().to_vec(),
        prefs: prefs.iter().map(|p: &Preference| p.weights().to_vec()).collect(),
        wbc: weights,
        returns: returns.iter().map(|r| r.values().to_vec()).collect(),
        hv_ratio: metrics.hv / oracle_hv,
        recovered: recovered_points(&oracle, &returns, RECOVERY_TOL),
        n_oracle: oracle.len(),
        metrics,
        oracle_hv,
    };
    write_json(&dir.join("metrics.json"), &out)?;
    println!(
        "{}  hv {:.3} ({:.3} of oracle)  sp {:.4}  eu {:.4}",
        dir.display(),
        out.metrics.hv,
        out.hv_ratio,
        out.metrics.sp_filtered,
        out.metrics.eu
    );
    Ok(())
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    let env = Env::by_name(&a.env)?;
    let front = env.oracle_pareto_front()?;
    let n = env.spec().n_objectives;
    let mut csv = (1..=n).map(|i| format!("r{i}")).collect::<Vec<_>>().join(",");
    csv.push('\n');
    for p in &front {
        csv.push_str(&p.values().iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
