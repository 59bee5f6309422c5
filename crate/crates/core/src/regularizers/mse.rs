use rand::Rng;

use super::{row_sq_error, ActorConfig};
use crate::error::Result;
use crate::nn::{Mlp, MlpConfig, OutputActivation, Parameterized, Tape, Tensor, Var};

/// Deterministic actor `tanh(f(cond))` cloned with a squared-error loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MseActor {
    net: Mlp,
}

impl MseActor {
    pub fn new<R: Rng + ?Sized>(cfg: &ActorConfig, cond_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        let mc = MlpConfig::new(cond_dim, &cfg.hidden, action_dim, cfg.activation, OutputActivation::Tanh);
        Ok(Self {
            net: Mlp::new("actor", mc, rng)?,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.net.config().output_dim()
    }

    pub fn forward(&self, tape: &mut Tape, cond: Var, trainable: bool) -> Result<Var> {
        self.net.forward(tape, cond, trainable)
    }

    pub fn infer(&self, cond: &Tensor) -> Result<Tensor> {
        self.net.infer(cond)
    }

    /// Squared error averaged over action dimensions, per sample.
    pub fn bc_loss(&self, tape: &mut Tape, cond: Var, actions: Var, trainable: bool) -> Result<Var> {
        let a = self.forward(tape, cond, trainable)?;
        row_sq_error(tape, a, actions, true)
    }
}

impl Parameterized for MseActor {
    fn modules(&self) -> Vec<&Mlp> {
        vec![&self.net]
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        vec![&mut self.net]
    }
}
