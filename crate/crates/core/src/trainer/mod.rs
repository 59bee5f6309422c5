//! Preference-conditioned scalarized actor-critic with an augmented
//! behavior-cloning preference, and batched policy evaluation.

mod batch;
mod critic;
mod eval;

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batch::BatchTensors;
pub use critic::{critic_input, CriticEnsemble, OnlineCritics};
pub use eval::{evaluate_policy, rollout_batch, PreferencePolicy, RolloutJob};

use crate::dataset::{BatchSampler, OfflineDataset, SampleBatch};
use crate::envs::{Env, EnvSpec};
use crate::error::{Error, Result};
use crate::momdp::{augment, Preference};
use crate::nn::{read_checkpoint, write_checkpoint, Checkpoint, Activation, Adam, AdamConfig, Mlp, Parameterized, Tape, Tensor, Var};
use crate::noise::Noise;
use crate::regularizers::{Actor, ActorConfig, Family};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env_name: String,
    pub actor: ActorConfig,
    pub theta: f64,
    pub wbc_min: f64,
    /// Cloning scale; `None` selects the family default.
    pub eta: Option<f64>,
    pub gamma: f64,
    pub batch_size: usize,
    pub total_iterations: usize,
    pub n_critics: usize,
    pub polyak_tau: f64,
    pub seed: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub critic_hidden: Vec<usize>,
    pub critic_activation: Activation,
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env_name: crate::envs::LINEWORLD.to_string(),
            actor: ActorConfig::new(Family::Mse),
            theta: 0.0,
            wbc_min: 0.2,
            eta: None,
            gamma: 0.99,
            batch_size: 64,
            total_iterations: 50_000,
            n_critics: 2,
            polyak_tau: 0.005,
            seed: 0,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            critic_hidden: vec![64, 64],
            critic_activation: Activation::Mish,
            log_interval: 100,
        }
    }
}

pub fn default_eta(family: Family) -> f64 {
    match family {
        Family::Mse => 50.0,
        Family::Cvae => 200.0,
        Family::Diffusion => 100.0,
    }
}

impl TrainConfig {
    pub fn new(env_name: &str, family: Family) -> Self {
        Self {
            env_name: env_name.to_string(),
            actor: ActorConfig::new(family),
            ..Self::default()
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| default_eta(self.actor.family))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfiguration(m));
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if !(self.wbc_min > 0.0 && self.wbc_min <= 1.0) {
            return bad(format!("wbc_min must lie in (0, 1], got {}", self.wbc_min));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.n_critics == 0 {
            return bad("n_critics must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.polyak_tau > 0.0 && self.polyak_tau <= 1.0) {
            return bad(format!("polyak_tau must lie in (0, 1], got {}", self.polyak_tau));
        }
        if !(self.eta() >= 0.0 && self.eta().is_finite()) {
            return bad(format!("eta must be a finite non-negative number, got {}", self.eta()));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.log_interval == 0 {
            return bad("log_interval must be at least 1".into());
        }
        if self.actor.diffusion_steps == 0 {
            return bad("diffusion_steps must be at least 1".into());
        }
        Ok(())
    }
}

/// Actor, critics and optimizer state of one training run.
#[derive(Clone, Debug)]
pub struct PolicyBundle {
    pub config: TrainConfig,
    pub env: EnvSpec,
    pub actor: Actor,
    pub critics: CriticEnsemble,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub iteration: u64,
}

impl PolicyBundle {
    pub fn new<R: rand::Rng + ?Sized>(config: TrainConfig, env: EnvSpec, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if env.name != config.env_name {
            return Err(Error::invalid(format!(
                "config targets `{}` but the environment is `{}`",
                config.env_name, env.name
            )));
        }
        if env.action_low.iter().any(|v| *v != -1.0) || env.action_high.iter().any(|v| *v != 1.0) {
            return Err(Error::Unsupported("actors emit actions in [-1, 1]; environment bounds differ".into()));
        }
        let n = env.n_objectives;
        let cond_dim = env.state_dim + n + 1;
        let actor = Actor::new(&config.actor, cond_dim, env.action_dim, rng)?;
        let critics = CriticEnsemble::new(
            config.n_critics,
            env.state_dim + env.action_dim + n + 1,
            n,
            &config.critic_hidden,
            config.critic_activation,
            rng,
        )?;
        let actor_opt = Adam::new(&actor, AdamConfig::with_lr(config.actor_lr));
        let critic_opt = Adam::new(&critics.online, AdamConfig::with_lr(config.critic_lr));
        Ok(Self {
            config,
            env,
            actor,
            critics,
            actor_opt,
            critic_opt,
            iteration: 0,
        })
    }

    /// Writes actor and critic parameters with the training config in the header.
    pub fn save(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let extra = serde_json::json!({
            "kind": "regularized",
            "config": self.config,
            "env": self.env,
            "iteration": self.iteration,
        });
        write_checkpoint(path, self, self.config.seed, config_hash, extra)
    }

    /// Rebuilds a bundle from a checkpoint. Optimizer moments start fresh.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.extra::<String>("kind")? != "regularized" {
            return Err(Error::Integrity("checkpoint does not hold a regularized actor-critic".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bundle = Self::new(ck.extra("config")?, ck.extra("env")?, &mut rng)?;
        ck.load_into(&mut bundle)?;
        bundle.iteration = ck.extra("iteration")?;
        Ok(bundle)
    }

    pub fn condition(&self, states: &Tensor, features: &Tensor) -> Result<Tensor> {
        Tensor::concat_cols(&[states, features])
    }

    pub fn critic_loss<N: Noise + ?Sized>(&self, tape: &mut Tape, bt: &BatchTensors, noise: &mut N) -> Result<Var> {
        critic_loss(&self.actor, &self.critics, self.config.gamma, tape, bt, noise)
    }

    pub fn actor_loss<N: Noise + ?Sized>(&self, tape: &mut Tape, bt: &BatchTensors, noise: &mut N) -> Result<Var> {
        actor_loss(&self.actor, &self.critics, self.config.eta(), tape, bt, noise)
    }
}

/// Critic loss for one batch. Next actions come from `actor`.
pub fn critic_loss<N: Noise + ?Sized>(
    actor: &Actor,
    critics: &CriticEnsemble,
    gamma: f64,
    tape: &mut Tape,
    bt: &BatchTensors,
    noise: &mut N,
) -> Result<Var> {
    let next_cond = Tensor::concat_cols(&[&bt.next_states, &bt.features])?;
    let next_actions = actor.sample(&next_cond, noise)?;
    let next_in = critic_input(&bt.next_states, &next_actions, &bt.features)?;
    let next_q = critics.pessimistic_target(&next_in, &bt.task)?;
    let y = CriticEnsemble::bellman_targets(&bt.rewards, &bt.not_done, &next_q, gamma)?;
    let input = critic_input(&bt.states, &bt.actions, &bt.features)?;
    critics.loss(tape, &input, &y)
}

/// Actor loss `mean(-[(1-ω_bc) ωᵀQ(s, a') - ω_bc η L_bc])`.
pub fn actor_loss<N: Noise + ?Sized>(
    actor: &Actor,
    critics: &CriticEnsemble,
    eta: f64,
    tape: &mut Tape,
    bt: &BatchTensors,
    noise: &mut N,
) -> Result<Var> {
    let s = tape.constant(bt.states.clone());
    let f = tape.constant(bt.features.clone());
    let cond = tape.concat_cols(&[s, f])?;
    let a = actor.sample_diff(tape, cond, noise, true)?;
    let q_in = tape.concat_cols(&[s, a, f])?;
    let task = tape.constant(bt.task.clone());
    let q = critics.min_scalarized(tape, q_in, task)?;
    let acts = tape.constant(bt.actions.clone());
    let bc = actor.bc_loss(tape, cond, acts, noise, true)?;
    let w = tape.constant(bt.bc_weight.clone());
    let wbc = tape.mul(bc, w)?;
    let wbc = tape.scale(wbc, eta);
    let per = tape.sub(wbc, q)?;
    Ok(tape.mean_all(per))
}

impl Parameterized for PolicyBundle {
    fn modules(&self) -> Vec<&Mlp> {
        let mut m = self.actor.modules();
        m.extend(self.critics.modules());
        m
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        let mut m = self.actor.modules_mut();
        m.extend(self.critics.modules_mut());
        m
    }
}

impl PreferencePolicy for PolicyBundle {
    fn spec(&self) -> &EnvSpec {
        &self.env
    }

    fn act(&self, states: &Tensor, prefs: &[&Preference], wbc: &[f64], noise: &mut dyn Noise) -> Result<Tensor> {
        let feats = prefs
            .iter()
            .zip(wbc)
            .map(|(p, w)| Ok(augment(p, *w)?.features()))
            .collect::<Result<Vec<_>>>()?;
        let cond = self.condition(states, &Tensor::from_rows(&feats)?)?;
        self.actor.sample(&cond, noise)
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_wbc: f64,
    pub wall_ms: u64,
}

pub const LOG_HEADER: &str = "iteration,critic_loss,actor_loss,mean_wbc,wall_ms";

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.critic_loss, self.actor_loss, self.mean_wbc, self.wall_ms
        )
    }
}

/// Averages step losses over a logging window.
#[derive(Clone, Debug)]
pub struct LogWindow {
    interval: u64,
    sums: (f64, f64, f64),
    count: usize,
    started: Instant,
    pub rows: Vec<LogRow>,
}

impl LogWindow {
    pub fn new(interval: usize) -> Self {
        Self {
            interval: interval.max(1) as u64,
            sums: (0.0, 0.0, 0.0),
            count: 0,
            started: Instant::now(),
            rows: Vec::new(),
        }
    }

    pub fn record(&mut self, iteration: u64, l: StepLosses) {
        self.sums.0 += l.critic;
        self.sums.1 += l.actor;
        self.sums.2 += l.mean_wbc;
        self.count += 1;
        if iteration % self.interval == 0 {
            let n = self.count as f64;
            self.rows.push(LogRow {
                iteration,
                critic_loss: self.sums.0 / n,
                actor_loss: self.sums.1 / n,
                mean_wbc: self.sums.2 / n,
                wall_ms: self.started.elapsed().as_millis() as u64,
            });
            self.sums = (0.0, 0.0, 0.0);
            self.count = 0;
        }
    }
}

/// Losses of a single iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub critic: f64,
    pub actor: f64,
    pub mean_wbc: f64,
}

/// Drives training of a [`PolicyBundle`] on a fixed dataset.
pub struct Trainer<'a> {
    pub bundle: PolicyBundle,
    ds: &'a OfflineDataset,
    sampler: BatchSampler,
    rng: ChaCha8Rng,
    log: LogWindow,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, ds: &'a OfflineDataset) -> Result<Self> {
        config.validate()?;
        let env = Env::by_name(&config.env_name)?;
        if ds.env_name != config.env_name {
            return Err(Error::InvalidConfiguration(format!(
                "dataset was generated on `{}` but the config targets `{}`",
                ds.env_name, config.env_name
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sampler = BatchSampler::new(ds, config.theta, config.wbc_min)?;
        let log = LogWindow::new(config.log_interval);
        let bundle = PolicyBundle::new(config, env.spec().clone(), &mut rng)?;
        Ok(Self {
            bundle,
            ds,
            sampler,
            rng,
            log,
        })
    }

    pub fn sample(&mut self) -> Result<SampleBatch> {
        self.sampler.sample(self.ds, self.bundle.config.batch_size, &mut self.rng)
    }

    /// One critic update, one actor update and a target soft update.
    pub fn step(&mut self) -> Result<StepLosses> {
        let batch = self.sample()?;
        let bt = BatchTensors::new(&batch, true)?;
        let b = &mut self.bundle;
        let iteration = b.iteration + 1;

        let mut tape = Tape::new();
        let cl = b.critic_loss(&mut tape, &bt, &mut self.rng)?;
        let critic = tape.value(cl).item();
        let diverged = |critic: f64, actor: f64| Error::Diverged {
            iteration,
            critic_loss: critic,
            actor_loss: actor,
        };
        if !critic.is_finite() {
            return Err(diverged(critic, f64::NAN));
        }
        let g = tape.backward(cl)?;
        b.critic_opt.step(&mut b.critics.online, &g).map_err(|_| diverged(critic, f64::NAN))?;

        let mut tape = Tape::new();
        let al = b.actor_loss(&mut tape, &bt, &mut self.rng)?;
        let actor = tape.value(al).item();
        if !actor.is_finite() {
            return Err(diverged(critic, actor));
        }
        let g = tape.backward(al)?;
        b.actor_opt.step(&mut b.actor, &g).map_err(|_| diverged(critic, actor))?;
        b.critics.soft_update(b.config.polyak_tau)?;
        b.iteration = iteration;

        let mean_wbc = bt.bc_weight.data.iter().sum::<f64>() / bt.len() as f64;
        let losses = StepLosses { critic, actor, mean_wbc };
        self.log.record(iteration, losses);
        Ok(losses)
    }

    /// Steps until `total_iterations` is reached.
    pub fn run(&mut self) -> Result<()> {
        while self.bundle.iteration < self.bundle.config.total_iterations as u64 {
            self.step()?;
        }
        Ok(())
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log.rows
    }

    pub fn finish(self) -> (PolicyBundle, Vec<LogRow>) {
        (self.bundle, self.log.rows)
    }
}

/// Trains a bundle from scratch and returns it with its log.
pub fn train(config: TrainConfig, ds: &OfflineDataset) -> Result<(PolicyBundle, Vec<LogRow>)> {
    let mut t = Trainer::new(config, ds)?;
    t.run()?;
    Ok(t.finish())
}

#[cfg(test)]
mod tests;
