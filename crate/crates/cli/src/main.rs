//! `offmorl`: dataset generation, training, adaptation, evaluation, plots and
//! the reproduction suite for offline multi-objective RL on the toy environments.

mod commands;
mod plot;
mod repro;
mod run;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spec::{AdaptSpec, WbcSpec};

#[derive(Parser)]
#[command(name = "offmorl", version, about = "Offline multi-objective RL experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out scripted behavior policies into a dataset file.
    GenData(GenDataArgs),
    /// Train a policy from a dataset into a run directory.
    Train(TrainArgs),
    /// Adapt the cloning weight for one preference.
    Adapt(AdaptArgs),
    /// Evaluate a checkpoint on a preference grid.
    Eval(EvalArgs),
    /// Render an evaluation as SVG.
    Plot(PlotArgs),
    /// Print the exact Pareto front of an environment.
    Oracle(OracleArgs),
    /// Run the full check suite and write a results table.
    Repro(ReproArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum QualityArg {
    Expert,
    Amateur,
}

#[derive(Args)]
pub struct GenDataArgs {
    #[arg(long)]
    env: String,
    /// Number of trajectories.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, value_enum, default_value_t = QualityArg::Expert)]
    quality: QualityArg,
    /// Fraction of expert trajectories; overrides --quality.
    #[arg(long)]
    expert_fraction: Option<f64>,
    /// Amateur action noise.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// `uniform`, `corner` or `fixed:w1,w2`.
    #[arg(long, default_value = "uniform")]
    pref: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset file written by gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Environment defaults in TOML; the built-in file for the dataset's environment otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mse, cvae, diffusion, mo-cql or bc-p; the config's actor family otherwise.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Conservative penalty weight for mo-cql.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; `$OFFMORL_RUN_ROOT/<algo>-<hash>` otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AdaptArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Target preference, e.g. `0.3,0.7`.
    #[arg(long)]
    pref: String,
    /// Overrides such as `N=3,K=10`.
    #[arg(long, default_value = "")]
    adapt: AdaptSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Number of evaluation preferences.
    #[arg(long)]
    prefs: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    /// `fixed:W`, `oracle:grid=G` or `adapt`.
    #[arg(long)]
    wbc: Option<WbcSpec>,
    /// Adaptation overrides such as `N=3,K=10`; implies `--wbc adapt`.
    #[arg(long)]
    adapt: Option<AdaptSpec>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PlotArgs {
    /// Directory written by eval.
    #[arg(long)]
    eval: PathBuf,
    /// Dataset whose returns are drawn in grey.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output file; `<eval>/front.svg` otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long)]
    env: String,
    /// CSV file; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SuiteArg {
    Smoke,
    Desk,
}

#[derive(Args)]
pub struct ReproArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::Smoke)]
    suite: SuiteArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Misuse of flags found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(e: &anyhow::Error) -> u8 {
    use offmorl_core::Error as E;
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<E>() {
        Some(
            E::InvalidArgument(_)
            | E::InvalidConfiguration(_)
            | E::Parse { .. }
            | E::Integrity(_)
            | E::Unsupported(_)
            | E::DegenerateReturn(_),
        ) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let out = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Adapt(a) => commands::adapt(a),
        Command::Eval(a) => commands::eval(a),
        Command::Plot(a) => plot::run(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Repro(a) => repro::run(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
