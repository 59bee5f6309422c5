//! Expressiveness check: a diffusion actor fitted to actions drawn from two
//! modes at ±0.8 must put its samples on both modes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Adam, AdamConfig, Tape, Tensor};
use crate::regularizers::{Actor, ActorConfig, Family, ScheduleKind};

pub const MODE: f64 = 0.8;
pub const MODE_RADIUS: f64 = 0.2;
pub const MIN_NEAR: f64 = 0.95;
pub const MIN_MODE_MASS: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BimodalConfig {
    pub seed: u64,
    pub iterations: usize,
    pub width: usize,
    pub lr: f64,
    pub schedule: ScheduleKind,
}

impl Default for BimodalConfig {
    fn default() -> Self {
        Self {
            seed: 11,
            iterations: 4000,
            width: 32,
            lr: 3e-3,
            schedule: ScheduleKind::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BimodalReport {
    pub samples: usize,
    /// Fraction within `MODE_RADIUS` of either mode.
    pub near: f64,
    pub plus: f64,
    pub minus: f64,
}

impl BimodalReport {
    pub fn passes(&self) -> bool {
        self.near >= MIN_NEAR && self.plus >= MIN_MODE_MASS && self.minus >= MIN_MODE_MASS
    }
}

pub fn bimodal_fit(cfg: &BimodalConfig) -> Result<BimodalReport> {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    let actor_cfg = ActorConfig {
        hidden: vec![cfg.width, cfg.width],
        schedule: cfg.schedule,
        ..ActorConfig::new(Family::Diffusion)
    };
    let mut actor = Actor::new(&actor_cfg, 1, 1, &mut r)?;
    let mut opt = Adam::new(&actor, AdamConfig::with_lr(cfg.lr));
    let b = 64;
    let cond = Tensor::zeros(b, 1);
    for _ in 0..cfg.iterations {
        let act = Tensor::new(b, 1, (0..b).map(|_| if r.random_bool(0.5) { MODE } else { -MODE }).collect())?;
        let mut tape = Tape::new();
        let c = tape.constant(cond.clone());
        let a = tape.constant(act);
        let l = actor.bc_loss_mean(&mut tape, c, a, &mut r)?;
        let g = tape.backward(l)?;
        opt.step(&mut actor, &g)?;
    }
    let samples = 1000;
    let s = actor.sample(&Tensor::zeros(samples, 1), &mut r)?;
    let frac = |f: &dyn Fn(f64) -> bool| s.data.iter().filter(|v| f(**v)).count() as f64 / samples as f64;
    let plus = frac(&|v| (v - MODE).abs() <= MODE_RADIUS);
    let minus = frac(&|v| (v + MODE).abs() <= MODE_RADIUS);
    Ok(BimodalReport {
        samples,
        near: plus + minus,
        plus,
        minus,
    })
}
