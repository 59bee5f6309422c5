use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ActorConfig;
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpConfig, OutputActivation, Parameterized, Tape, Tensor, Var};
use crate::noise::Noise;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ScheduleKind {
    /// `β` linear from `beta_start` to `beta_end`.
    Linear { beta_start: f64, beta_end: f64 },
    /// Discretized variance-preserving schedule.
    Vp,
}

/// Variance of the noise added at each reverse step but the last.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReverseVariance {
    /// `β_i`.
    Beta,
    /// `β_i (1 - ᾱ_{i-1}) / (1 - ᾱ_i)`.
    #[default]
    Posterior,
}

impl Default for ScheduleKind {
    fn default() -> Self {
        Self::linear()
    }
}

impl ScheduleKind {
    pub fn linear() -> Self {
        ScheduleKind::Linear {
            beta_start: 1e-4,
            beta_end: 0.1,
        }
    }
}

/// Noise schedule over steps `1..=N`. Index `i - 1` holds step `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

const VP_BETA_MIN: f64 = 0.1;
const VP_BETA_MAX: f64 = 10.0;

impl DiffusionSchedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("diffusion needs at least one step"));
        }
        let t = steps as f64;
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear { beta_start, beta_end } => (0..steps)
                .map(|k| {
                    if steps == 1 {
                        beta_start
                    } else {
                        beta_start + (beta_end - beta_start) * k as f64 / (t - 1.0)
                    }
                })
                .collect(),
            ScheduleKind::Vp => (1..=steps)
                .map(|i| {
                    let i = i as f64;
                    1.0 - (-VP_BETA_MIN / t - 0.5 * (VP_BETA_MAX - VP_BETA_MIN) * (2.0 * i - 1.0) / (t * t)).exp()
                })
                .collect(),
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::invalid("diffusion betas must lie in (0, 1)"));
        }
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(Self { betas, alpha_bars })
    }

    /// Builds the schedule from cumulative products, which must be strictly
    /// decreasing inside `(0, 1)`.
    pub fn from_alpha_bars(alpha_bars: &[f64]) -> Result<Self> {
        let mut prev = 1.0;
        let mut betas = Vec::with_capacity(alpha_bars.len());
        for &ab in alpha_bars {
            if !(ab > 0.0 && ab < prev) {
                return Err(Error::invalid("alpha_bars must be strictly decreasing within (0, 1)"));
            }
            betas.push(1.0 - ab / prev);
            prev = ab;
        }
        Self::from_betas(betas)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.betas[i - 1]
    }

    pub fn reverse_variance(&self, i: usize, kind: ReverseVariance) -> f64 {
        match kind {
            ReverseVariance::Beta => self.beta(i),
            ReverseVariance::Posterior => self.beta(i) * (1.0 - self.alpha_bar(i - 1)) / (1.0 - self.alpha_bar(i)),
        }
    }

    pub fn alpha_bar(&self, i: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            self.alpha_bars[i - 1]
        }
    }

    /// Forward-noised action `√ᾱ_i a + √(1 - ᾱ_i) ε`.
    pub fn q_sample(&self, action: &[f64], i: usize, eps: &[f64]) -> Vec<f64> {
        let (sa, sn) = (self.alpha_bar(i).sqrt(), (1.0 - self.alpha_bar(i)).sqrt());
        action.iter().zip(eps).map(|(a, e)| sa * a + sn * e).collect()
    }
}

/// Denoising diffusion actor with an ε-predicting network over
/// `[x_i ‖ cond ‖ i/N]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionActor {
    eps_net: Mlp,
    schedule: DiffusionSchedule,
    action_dim: usize,
    clip_denoised: bool,
    variance: ReverseVariance,
}

impl DiffusionActor {
    pub fn new<R: Rng + ?Sized>(cfg: &ActorConfig, cond_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        let schedule = DiffusionSchedule::new(cfg.schedule, cfg.diffusion_steps)?;
        Self::with_schedule(cfg, cond_dim, action_dim, schedule, rng)
    }

    pub fn with_schedule<R: Rng + ?Sized>(
        cfg: &ActorConfig,
        cond_dim: usize,
        action_dim: usize,
        schedule: DiffusionSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        let mc = MlpConfig::new(action_dim + cond_dim + 1, &cfg.hidden, action_dim, cfg.activation, OutputActivation::None);
        Ok(Self {
            eps_net: Mlp::new("eps", mc, rng)?,
            schedule,
            action_dim,
            clip_denoised: cfg.clip_denoised,
            variance: cfg.reverse_variance,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn eps_net(&self) -> &Mlp {
        &self.eps_net
    }

    fn predict_eps(&self, tape: &mut Tape, x: Var, cond: Var, step: Var, trainable: bool) -> Result<Var> {
        let input = tape.concat_cols(&[x, cond, step])?;
        self.eps_net.forward(tape, input, trainable)
    }

    /// Noise-prediction error summed over action dims, with one uniformly
    /// drawn step per sample.
    pub fn bc_loss<N: Noise + ?Sized>(&self, tape: &mut Tape, cond: Var, actions: Var, noise: &mut N, trainable: bool) -> Result<Var> {
        let b = tape.shape(cond)[0];
        let n = self.schedule.steps();
        let steps = noise.int_per_row(b, 1, n);
        let eps = noise.standard_normal(b, self.action_dim);
        let col = |f: &dyn Fn(usize) -> f64| Tensor {
            rows: b,
            cols: 1,
            data: steps.iter().map(|&i| f(i)).collect(),
        };
        let sa = tape.constant(col(&|i| self.schedule.alpha_bar(i).sqrt()));
        let sn = col(&|i| (1.0 - self.schedule.alpha_bar(i)).sqrt());
        let t = tape.constant(col(&|i| i as f64 / n as f64));
        let mut noisy = eps.clone();
        for r in 0..b {
            let s = sn.data[r];
            noisy.data[r * self.action_dim..(r + 1) * self.action_dim].iter_mut().for_each(|v| *v *= s);
        }
        let noisy = tape.constant(noisy);
        let scaled = tape.mul_col(actions, sa)?;
        let x = tape.add(scaled, noisy)?;
        let pred = self.predict_eps(tape, x, cond, t, trainable)?;
        let target = tape.constant(eps);
        super::row_sq_error(tape, pred, target, false)
    }

    /// Runs the full reverse chain from `x_N ~ N(0, I)` on the tape.
    pub fn sample_diff<N: Noise + ?Sized>(&self, tape: &mut Tape, cond: Var, noise: &mut N, trainable: bool) -> Result<Var> {
        let b = tape.shape(cond)[0];
        let n = self.schedule.steps();
        let mut x = tape.constant(noise.standard_normal(b, self.action_dim));
        for i in (1..=n).rev() {
            let t = tape.constant(Tensor::full(b, 1, i as f64 / n as f64));
            let eps = self.predict_eps(tape, x, cond, t, trainable)?;
            let ab = self.schedule.alpha_bar(i);
            let ab_prev = self.schedule.alpha_bar(i - 1);
            let beta = self.schedule.beta(i);

            let se = tape.scale(eps, -(1.0 - ab).sqrt());
            let num = tape.add(x, se)?;
            let mut x0 = tape.scale(num, 1.0 / ab.sqrt());
            if self.clip_denoised {
                x0 = tape.clamp(x0, -1.0, 1.0);
            }
            let c0 = beta * ab_prev.sqrt() / (1.0 - ab);
            let ct = (1.0 - ab_prev) * (1.0 - beta).sqrt() / (1.0 - ab);
            let m0 = tape.scale(x0, c0);
            let mt = tape.scale(x, ct);
            x = tape.add(m0, mt)?;
            if i > 1 {
                let sd = self.schedule.reverse_variance(i, self.variance).sqrt();
                let z = noise.standard_normal(b, self.action_dim).map(|v| v * sd);
                let z = tape.constant(z);
                x = tape.add(x, z)?;
            }
        }
        Ok(tape.clamp(x, -1.0, 1.0))
    }
}

impl Parameterized for DiffusionActor {
    fn modules(&self) -> Vec<&Mlp> {
        vec![&self.eps_net]
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        vec![&mut self.eps_net]
    }
}
