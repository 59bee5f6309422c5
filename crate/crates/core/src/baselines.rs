//! Baselines: MO-CQL (scalarized actor-critic with a conservative critic
//! penalty and a tanh-Gaussian actor) and preference-conditioned behavior
//! cloning BC(P).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BatchSampler, OfflineDataset};
use crate::envs::{Env, EnvSpec};
use crate::error::{Error, Result};
use crate::momdp::Preference;
use crate::nn::{
    read_checkpoint, write_checkpoint, Adam, AdamConfig, Checkpoint, Mlp, MlpConfig, OutputActivation, Parameterized,
    Tape, Tensor, Var,
};
use crate::noise::Noise;
use crate::regularizers::{ActorConfig, Family, MseActor};
use crate::trainer::{
    critic_input, BatchTensors, CriticEnsemble, LogRow, LogWindow, PolicyBundle, PreferencePolicy, StepLosses,
    TrainConfig,
};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `a = tanh(μ + σ ε)` with `log σ` clamped to `[-5, 2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianActor {
    net: Mlp,
    action_dim: usize,
}

impl GaussianActor {
    pub fn new<R: rand::Rng + ?Sized>(cfg: &ActorConfig, cond_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        let mc = MlpConfig::new(cond_dim, &cfg.hidden, 2 * action_dim, cfg.activation, OutputActivation::None);
        Ok(Self {
            net: Mlp::new("gaussian_actor", mc, rng)?,
            action_dim,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Reparameterized sample.
    pub fn sample_diff<N: Noise + ?Sized>(&self, tape: &mut Tape, cond: Var, noise: &mut N, trainable: bool) -> Result<Var> {
        let a = self.action_dim;
        let out = self.net.forward(tape, cond, trainable)?;
        let mean = tape.slice_cols(out, 0, a)?;
        let raw = tape.slice_cols(out, a, 2 * a)?;
        let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(log_std);
        let eps = tape.constant(noise.standard_normal(tape.shape(cond)[0], a));
        let s = tape.mul(std, eps)?;
        let u = tape.add(mean, s)?;
        Ok(tape.tanh(u))
    }

    pub fn sample<N: Noise + ?Sized>(&self, cond: &Tensor, noise: &mut N) -> Result<Tensor> {
        let mut tape = Tape::new();
        let c = tape.constant(cond.clone());
        let a = self.sample_diff(&mut tape, c, noise, false)?;
        Ok(tape.value(a).clone())
    }

    /// `tanh(μ)`, used for evaluation.
    pub fn mode(&self, cond: &Tensor) -> Result<Tensor> {
        Ok(self.net.infer(cond)?.slice_cols(0, self.action_dim).map(f64::tanh))
    }
}

impl Parameterized for GaussianActor {
    fn modules(&self) -> Vec<&Mlp> {
        vec![&self.net]
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        vec![&mut self.net]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CqlConfig {
    /// Shared fields; the regularizer family, η and ω_bc bounds are unused.
    pub train: TrainConfig,
    pub alpha: f64,
}

impl Default for CqlConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            alpha: 10.0,
        }
    }
}

impl CqlConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfiguration(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Mean over critics of `mean(ωᵀQ(s, a_π) - ωᵀQ(s, a))`.
pub fn conservative_gap(critics: &CriticEnsemble, tape: &mut Tape, data_in: &Tensor, policy_in: &Tensor, omega: &Tensor) -> Result<Var> {
    let xd = tape.constant(data_in.clone());
    let xp = tape.constant(policy_in.clone());
    let w = tape.constant(omega.clone());
    let mut total: Option<Var> = None;
    for m in &critics.online {
        let qp = m.forward(tape, xp, true)?;
        let qd = m.forward(tape, xd, true)?;
        let d = tape.sub(qp, qd)?;
        let d = tape.mul(d, w)?;
        let g = tape.mean_all(d);
        // mean_all divides by the objective count too; undo it.
        let g = tape.scale(g, omega.cols as f64);
        total = Some(match total {
            None => g,
            Some(t) => tape.add(t, g)?,
        });
    }
    let total = total.ok_or_else(|| Error::invalid("empty critic ensemble"))?;
    Ok(tape.scale(total, 1.0 / critics.len() as f64))
}

/// Bellman error plus `α` times the conservative gap. `bt` must be built
/// without augmentation.
pub fn mo_cql_critic_loss<N: Noise + ?Sized>(
    actor: &GaussianActor,
    critics: &CriticEnsemble,
    gamma: f64,
    alpha: f64,
    tape: &mut Tape,
    bt: &BatchTensors,
    noise: &mut N,
) -> Result<Var> {
    let next_cond = Tensor::concat_cols(&[&bt.next_states, &bt.features])?;
    let next_a = actor.sample(&next_cond, noise)?;
    let next_q = critics.pessimistic_target(&critic_input(&bt.next_states, &next_a, &bt.features)?, &bt.task)?;
    let y = CriticEnsemble::bellman_targets(&bt.rewards, &bt.not_done, &next_q, gamma)?;
    let data_in = critic_input(&bt.states, &bt.actions, &bt.features)?;
    let bellman = critics.loss(tape, &data_in, &y)?;
    if alpha == 0.0 {
        return Ok(bellman);
    }
    let cond = Tensor::concat_cols(&[&bt.states, &bt.features])?;
    let pi_a = actor.sample(&cond, noise)?;
    let pi_in = critic_input(&bt.states, &pi_a, &bt.features)?;
    let gap = conservative_gap(critics, tape, &data_in, &pi_in, &bt.task)?;
    let gap = tape.scale(gap, alpha);
    tape.add(bellman, gap)
}

/// `-mean ωᵀQ(s, a')` with `a'` reparameterized.
pub fn mo_cql_actor_loss<N: Noise + ?Sized>(
    actor: &GaussianActor,
    critics: &CriticEnsemble,
    tape: &mut Tape,
    bt: &BatchTensors,
    noise: &mut N,
) -> Result<Var> {
    let s = tape.constant(bt.states.clone());
    let f = tape.constant(bt.features.clone());
    let cond = tape.concat_cols(&[s, f])?;
    let a = actor.sample_diff(tape, cond, noise, true)?;
    let q_in = tape.concat_cols(&[s, a, f])?;
    let w = tape.constant(bt.task.clone());
    let q = critics.min_scalarized(tape, q_in, w)?;
    let m = tape.mean_all(q);
    Ok(tape.neg(m))
}

#[derive(Clone, Debug)]
pub struct MoCqlBundle {
    pub config: CqlConfig,
    pub env: EnvSpec,
    pub actor: GaussianActor,
    pub critics: CriticEnsemble,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub iteration: u64,
}

impl MoCqlBundle {
    pub fn new<R: rand::Rng + ?Sized>(config: CqlConfig, env: EnvSpec, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let t = &config.train;
        let n = env.n_objectives;
        let actor = GaussianActor::new(&t.actor, env.state_dim + n, env.action_dim, rng)?;
        let critics = CriticEnsemble::new(
            t.n_critics,
            env.state_dim + env.action_dim + n,
            n,
            &t.critic_hidden,
            t.critic_activation,
            rng,
        )?;
        let actor_opt = Adam::new(&actor, AdamConfig::with_lr(t.actor_lr));
        let critic_opt = Adam::new(&critics.online, AdamConfig::with_lr(t.critic_lr));
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

    pub fn save(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let extra = serde_json::json!({
            "kind": "mo-cql",
            "config": self.config,
            "env": self.env,
            "iteration": self.iteration,
        });
        write_checkpoint(path, self, self.config.train.seed, config_hash, extra)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut b = Self::new(ck.extra("config")?, ck.extra("env")?, &mut ChaCha8Rng::seed_from_u64(0))?;
        ck.load_into(&mut b)?;
        b.iteration = ck.extra("iteration")?;
        Ok(b)
    }
}

impl Parameterized for MoCqlBundle {
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

fn plain_condition(states: &Tensor, prefs: &[&Preference]) -> Result<Tensor> {
    let p = Tensor::from_rows(&prefs.iter().map(|p| p.weights().to_vec()).collect::<Vec<_>>())?;
    Tensor::concat_cols(&[states, &p])
}

impl PreferencePolicy for MoCqlBundle {
    fn spec(&self) -> &EnvSpec {
        &self.env
    }
    fn act(&self, states: &Tensor, prefs: &[&Preference], _wbc: &[f64], _noise: &mut dyn Noise) -> Result<Tensor> {
        self.actor.mode(&plain_condition(states, prefs)?)
    }
}

fn check_dataset(train: &TrainConfig, ds: &OfflineDataset) -> Result<Env> {
    train.validate()?;
    if ds.env_name != train.env_name {
        return Err(Error::InvalidConfiguration(format!(
            "dataset was generated on `{}` but the config targets `{}`",
            ds.env_name, train.env_name
        )));
    }
    Env::by_name(&train.env_name)
}

fn diverged(iteration: u64, critic: f64, actor: f64) -> Error {
    Error::Diverged {
        iteration,
        critic_loss: critic,
        actor_loss: actor,
    }
}

pub fn train_mo_cql(config: CqlConfig, ds: &OfflineDataset) -> Result<(MoCqlBundle, Vec<LogRow>)> {
    config.validate()?;
    let env = check_dataset(&config.train, ds)?;
    let t = config.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
    let sampler = BatchSampler::new(ds, t.theta, t.wbc_min)?;
    let mut b = MoCqlBundle::new(config.clone(), env.spec().clone(), &mut rng)?;
    let mut log = LogWindow::new(t.log_interval);
    while b.iteration < t.total_iterations as u64 {
        let it = b.iteration + 1;
        let bt = BatchTensors::new(&sampler.sample(ds, t.batch_size, &mut rng)?, false)?;
        let mut tape = Tape::new();
        let cl = mo_cql_critic_loss(&b.actor, &b.critics, t.gamma, config.alpha, &mut tape, &bt, &mut rng)?;
        let critic = tape.value(cl).item();
        if !critic.is_finite() {
            return Err(diverged(it, critic, f64::NAN));
        }
        let g = tape.backward(cl)?;
        b.critic_opt.step(&mut b.critics.online, &g).map_err(|_| diverged(it, critic, f64::NAN))?;
        let mut tape = Tape::new();
        let al = mo_cql_actor_loss(&b.actor, &b.critics, &mut tape, &bt, &mut rng)?;
        let actor = tape.value(al).item();
        if !actor.is_finite() {
            return Err(diverged(it, critic, actor));
        }
        let g = tape.backward(al)?;
        b.actor_opt.step(&mut b.actor, &g).map_err(|_| diverged(it, critic, actor))?;
        b.critics.soft_update(t.polyak_tau)?;
        b.iteration = it;
        log.record(it, StepLosses { critic, actor, mean_wbc: 0.0 });
    }
    Ok((b, log.rows))
}

/// Per-sample squared error (mean over action dims), averaged over the
/// batch, for an actor conditioned on `[s ‖ ω_τ]`.
pub fn bc_p_loss(actor: &MseActor, tape: &mut Tape, states: &Tensor, prefs: &Tensor, actions: &Tensor) -> Result<Var> {
    let c = tape.constant(Tensor::concat_cols(&[states, prefs])?);
    let a = tape.constant(actions.clone());
    let per = actor.bc_loss(tape, c, a, true)?;
    Ok(tape.mean_all(per))
}

#[derive(Clone, Debug)]
pub struct BcpBundle {
    pub config: TrainConfig,
    pub env: EnvSpec,
    pub actor: MseActor,
    pub opt: Adam,
    pub iteration: u64,
}

impl BcpBundle {
    pub fn new<R: rand::Rng + ?Sized>(config: TrainConfig, env: EnvSpec, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor_cfg = ActorConfig {
            family: Family::Mse,
            ..config.actor.clone()
        };
        let actor = MseActor::new(&actor_cfg, env.state_dim + env.n_objectives, env.action_dim, rng)?;
        let opt = Adam::new(&actor, AdamConfig::with_lr(config.actor_lr));
        Ok(Self {
            config,
            env,
            actor,
            opt,
            iteration: 0,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let extra = serde_json::json!({
            "kind": "bc-p",
            "config": self.config,
            "env": self.env,
            "iteration": self.iteration,
        });
        write_checkpoint(path, &self.actor, self.config.seed, config_hash, extra)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut b = Self::new(ck.extra("config")?, ck.extra("env")?, &mut ChaCha8Rng::seed_from_u64(0))?;
        ck.load_into(&mut b.actor)?;
        b.iteration = ck.extra("iteration")?;
        Ok(b)
    }
}

impl PreferencePolicy for BcpBundle {
    fn spec(&self) -> &EnvSpec {
        &self.env
    }
    fn act(&self, states: &Tensor, prefs: &[&Preference], _wbc: &[f64], _noise: &mut dyn Noise) -> Result<Tensor> {
        self.actor.infer(&plain_condition(states, prefs)?)
    }
}

/// Trains BC(P) on each trajectory's annotated behavior preference.
pub fn train_bc_p(config: TrainConfig, ds: &OfflineDataset) -> Result<(BcpBundle, Vec<LogRow>)> {
    let env = check_dataset(&config, ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sampler = BatchSampler::new(ds, 0.0, 1.0)?;
    let mut b = BcpBundle::new(config.clone(), env.spec().clone(), &mut rng)?;
    let mut log = LogWindow::new(config.log_interval);
    while b.iteration < config.total_iterations as u64 {
        let it = b.iteration + 1;
        let batch = sampler.sample(ds, config.batch_size, &mut rng)?;
        let bt = BatchTensors::new(&batch, false)?;
        let mut tape = Tape::new();
        let l = bc_p_loss(&b.actor, &mut tape, &bt.states, &bt.features, &bt.actions)?;
        let actor = tape.value(l).item();
        if !actor.is_finite() {
            return Err(diverged(it, 0.0, actor));
        }
        let g = tape.backward(l)?;
        b.opt.step(&mut b.actor, &g).map_err(|_| diverged(it, 0.0, actor))?;
        b.iteration = it;
        log.record(it, StepLosses { critic: 0.0, actor, mean_wbc: 1.0 });
    }
    Ok((b, log.rows))
}

/// Any trained policy, as stored in a checkpoint.
#[derive(Clone, Debug)]
pub enum LoadedPolicy {
    Regularized(Box<PolicyBundle>),
    MoCql(Box<MoCqlBundle>),
    BcP(Box<BcpBundle>),
}

impl LoadedPolicy {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck = read_checkpoint(path)?;
        Ok(match ck.extra::<String>("kind")?.as_str() {
            "regularized" => LoadedPolicy::Regularized(Box::new(PolicyBundle::from_checkpoint(&ck)?)),
            "mo-cql" => LoadedPolicy::MoCql(Box::new(MoCqlBundle::from_checkpoint(&ck)?)),
            "bc-p" => LoadedPolicy::BcP(Box::new(BcpBundle::from_checkpoint(&ck)?)),
            other => return Err(Error::Integrity(format!("unknown checkpoint kind `{other}`"))),
        })
    }

    /// Whether the policy reads the cloning weight.
    pub fn uses_wbc(&self) -> bool {
        matches!(self, LoadedPolicy::Regularized(_))
    }
}

impl PreferencePolicy for LoadedPolicy {
    fn spec(&self) -> &EnvSpec {
        match self {
            LoadedPolicy::Regularized(b) => b.spec(),
            LoadedPolicy::MoCql(b) => b.spec(),
            LoadedPolicy::BcP(b) => b.spec(),
        }
    }
    fn act(&self, states: &Tensor, prefs: &[&Preference], wbc: &[f64], noise: &mut dyn Noise) -> Result<Tensor> {
        match self {
            LoadedPolicy::Regularized(b) => b.act(states, prefs, wbc, noise),
            LoadedPolicy::MoCql(b) => b.act(states, prefs, wbc, noise),
            LoadedPolicy::BcP(b) => b.act(states, prefs, wbc, noise),
        }
    }
}
