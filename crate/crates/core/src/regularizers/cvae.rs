use rand::Rng;

use super::{row_sq_error, ActorConfig};
use crate::error::Result;
use crate::nn::{Mlp, MlpConfig, OutputActivation, Parameterized, Tape, Var};
use crate::noise::Noise;

/// Conditional VAE actor. The encoder maps `[cond ‖ action]` to the mean and
/// log-variance of a diagonal Gaussian; the decoder maps `[cond ‖ z]` to a
/// tanh-bounded action.
#[derive(Clone, Debug, PartialEq)]
pub struct CvaeActor {
    encoder: Mlp,
    decoder: Mlp,
    latent_dim: usize,
    action_dim: usize,
}

impl CvaeActor {
    pub fn new<R: Rng + ?Sized>(cfg: &ActorConfig, cond_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        let latent_dim = cfg.latent_dim.unwrap_or(2 * action_dim);
        let enc = MlpConfig::new(cond_dim + action_dim, &cfg.hidden, 2 * latent_dim, cfg.activation, OutputActivation::None);
        let dec = MlpConfig::new(cond_dim + latent_dim, &cfg.hidden, action_dim, cfg.activation, OutputActivation::Tanh);
        Ok(Self {
            encoder: Mlp::new("encoder", enc, rng)?,
            decoder: Mlp::new("decoder", dec, rng)?,
            latent_dim,
            action_dim,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Reconstruction error (mean over action dims) plus the KL divergence
    /// to `N(0, I)` summed over latent dims, per sample.
    pub fn bc_loss<N: Noise + ?Sized>(&self, tape: &mut Tape, cond: Var, actions: Var, noise: &mut N, trainable: bool) -> Result<Var> {
        let b = tape.shape(cond)[0];
        let l = self.latent_dim;
        let x = tape.concat_cols(&[cond, actions])?;
        let stats = self.encoder.forward(tape, x, trainable)?;
        let mu = tape.slice_cols(stats, 0, l)?;
        let raw = tape.slice_cols(stats, l, 2 * l)?;
        let logvar = tape.clamp(raw, -10.0, 10.0);
        let half = tape.scale(logvar, 0.5);
        let std = tape.exp(half);
        let eps = tape.constant(noise.standard_normal(b, l));
        let scaled = tape.mul(std, eps)?;
        let z = tape.add(mu, scaled)?;
        let dx = tape.concat_cols(&[cond, z])?;
        let recon = self.decoder.forward(tape, dx, trainable)?;
        let rec = row_sq_error(tape, recon, actions, true)?;

        // KL = 0.5 Σ (μ² + σ² − log σ² − 1)
        let mu2 = tape.square(mu);
        let var = tape.exp(logvar);
        let s = tape.add(mu2, var)?;
        let s = tape.sub(s, logvar)?;
        let s = tape.add_scalar(s, -1.0);
        let s = tape.sum_cols(s);
        let kl = tape.scale(s, 0.5);
        tape.add(rec, kl)
    }

    /// Decodes `z ~ N(0, I)`.
    pub fn sample_diff<N: Noise + ?Sized>(&self, tape: &mut Tape, cond: Var, noise: &mut N, trainable: bool) -> Result<Var> {
        let b = tape.shape(cond)[0];
        let z = tape.constant(noise.standard_normal(b, self.latent_dim));
        let x = tape.concat_cols(&[cond, z])?;
        self.decoder.forward(tape, x, trainable)
    }
}

impl Parameterized for CvaeActor {
    fn modules(&self) -> Vec<&Mlp> {
        vec![&self.encoder, &self.decoder]
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        vec![&mut self.encoder, &mut self.decoder]
    }
}
