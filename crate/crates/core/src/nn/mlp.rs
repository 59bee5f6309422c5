use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Activation, ParamKey, Tape, Var};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    None,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpConfig {
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: Activation, output_activation: OutputActivation) -> Self {
        let mut layer_widths = vec![input];
        layer_widths.extend_from_slice(hidden);
        layer_widths.push(output);
        Self {
            layer_widths,
            activation,
            output_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 3 {
            return Err(Error::InvalidConfiguration("an MLP needs at least one hidden layer".into()));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::InvalidConfiguration("layer widths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

/// Fully connected network. Parameters are stored per layer as a weight
/// matrix `[in, out]` followed by a bias row `[1, out]`.
#[derive(Debug)]
pub struct Mlp {
    name: String,
    uid: u64,
    config: MlpConfig,
    params: Vec<Tensor>,
}

impl Clone for Mlp {
    /// Clones get a fresh identity so their gradients never mix with the original's.
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            uid: fresh_uid(),
            config: self.config.clone(),
            params: self.params.clone(),
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl Mlp {
    /// Weights and biases drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(name: &str, config: MlpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = Vec::new();
        for w in config.layer_widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
            params.push(Tensor::new(fan_in, fan_out, draw(fan_in * fan_out))?);
            params.push(Tensor::new(1, fan_out, draw(fan_out))?);
        }
        Ok(Self {
            name: name.to_string(),
            uid: fresh_uid(),
            config,
            params,
        })
    }

    /// Copy with a new name and identity.
    pub fn renamed(&self, name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn key(&self, i: usize) -> ParamKey {
        (self.uid, i)
    }

    pub fn param_name(&self, i: usize) -> String {
        let kind = if i % 2 == 0 { "weight" } else { "bias" };
        format!("{}.layer{}.{kind}", self.name, i / 2)
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn n_layers(&self) -> usize {
        self.params.len() / 2
    }

    /// Sets the last layer's weights and bias to zero.
    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            p.data.fill(0.0);
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.config.input_dim() {
            return Err(Error::invalid(format!(
                "{}: input width {cols}, expected {}",
                self.name,
                self.config.input_dim()
            )));
        }
        Ok(())
    }

    /// Records the forward pass. With `trainable = false` the parameters
    /// enter the tape as constants, so gradients still flow to the input but
    /// not into this network.
    pub fn forward(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<Var> {
        self.check_input(tape.shape(x)[1])?;
        let mut h = x;
        let last = self.n_layers() - 1;
        for l in 0..=last {
            let (wk, bk) = (self.key(2 * l), self.key(2 * l + 1));
            let (w, b) = if trainable {
                (tape.param(wk, &self.params[2 * l]), tape.param(bk, &self.params[2 * l + 1]))
            } else {
                (tape.frozen(wk, &self.params[2 * l]), tape.frozen(bk, &self.params[2 * l + 1]))
            };
            let z = tape.matmul(h, w)?;
            h = tape.add_row(z, b)?;
            if l < last {
                h = tape.act(h, self.config.activation);
            } else if self.config.output_activation == OutputActivation::Tanh {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    /// Forward pass without a tape. Produces the same values as [`Mlp::forward`].
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.cols)?;
        let last = self.n_layers() - 1;
        let mut h = x.clone();
        for l in 0..=last {
            let (w, b) = (&self.params[2 * l], &self.params[2 * l + 1]);
            let mut z = Tensor::zeros(h.rows, w.cols);
            gemm(&h, false, w, false, &mut z);
            for chunk in z.data.chunks_mut(w.cols) {
                for (v, bi) in chunk.iter_mut().zip(&b.data) {
                    *v += bi;
                }
            }
            if l < last {
                let f = self.config.activation;
                z.data.iter_mut().for_each(|v| *v = f.apply(*v));
            } else if self.config.output_activation == OutputActivation::Tanh {
                z.data.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = z;
        }
        Ok(h)
    }

    /// Copies parameter values from `other` (same architecture).
    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        self.polyak_from(other, 1.0)
    }

    /// `self ← (1 - τ)·self + τ·online`.
    pub fn polyak_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        polyak_update(&mut self.params, &online.params, tau)
    }
}

/// `target ← (1 - τ)·target + τ·online`, elementwise.
pub fn polyak_update(target: &mut [Tensor], online: &[Tensor], tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("polyak tau must lie in (0, 1], got {tau}")));
    }
    if target.len() != online.len() || target.iter().zip(online).any(|(t, o)| t.shape() != o.shape()) {
        return Err(Error::invalid("polyak_update: parameter shapes differ"));
    }
    for (t, o) in target.iter_mut().zip(online) {
        if tau == 1.0 {
            t.data.copy_from_slice(&o.data);
        } else {
            for (a, b) in t.data.iter_mut().zip(&o.data) {
                *a = (1.0 - tau) * *a + tau * b;
            }
        }
    }
    Ok(())
}

/// Anything made of MLPs, exposed in a fixed declaration order.
pub trait Parameterized {
    fn modules(&self) -> Vec<&Mlp>;
    fn modules_mut(&mut self) -> Vec<&mut Mlp>;
}

impl Parameterized for Mlp {
    fn modules(&self) -> Vec<&Mlp> {
        vec![self]
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        vec![self]
    }
}

impl Parameterized for Vec<Mlp> {
    fn modules(&self) -> Vec<&Mlp> {
        self.iter().collect()
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        self.iter_mut().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(hidden: usize, act: Activation, out: OutputActivation) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Mlp::new("net", MlpConfig::new(3, &[hidden], 2, act, out), &mut rng).unwrap()
    }

    #[test]
    fn identity_and_zero_layers() {
        let mut m = net(2, Activation::Relu, OutputActivation::None);
        // Hidden layer maps (x0, x1, x2) -> (x0, x1); output copies it.
        m.params[0] = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        m.params[1] = Tensor::zeros(1, 2);
        m.params[2] = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        m.params[3] = Tensor::zeros(1, 2);
        let x = Tensor::row_vector(&[0.3, 0.7, 5.0]);
        assert_eq!(m.infer(&x).unwrap().data, vec![0.3, 0.7]);
        m.zero_output_layer();
        assert_eq!(m.infer(&x).unwrap().data, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_computed_two_layer_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mlp::new(
            "hand",
            MlpConfig::new(2, &[2], 1, Activation::Relu, OutputActivation::None),
            &mut rng,
        )
        .unwrap();
        m.params[0] = Tensor::from_rows(&[[1.0, -1.0], [2.0, 0.5]]).unwrap();
        m.params[1] = Tensor::row_vector(&[0.5, -2.0]);
        m.params[2] = Tensor::from_rows(&[[3.0], [4.0]]).unwrap();
        m.params[3] = Tensor::row_vector(&[1.0]);
        // hidden = relu([1+2+0.5, -1+0.5-2]) = [3.5, 0]; out = 3*3.5 + 1.
        assert_eq!(m.infer(&Tensor::row_vector(&[1.0, 1.0])).unwrap().data, vec![11.5]);
    }

    #[test]
    fn tape_and_inference_agree_bitwise() {
        for act in [Activation::Relu, Activation::Tanh, Activation::Mish] {
            let m = net(16, act, OutputActivation::Tanh);
            let x = Tensor::from_rows(&[[0.1, -0.4, 2.0], [1.0, 0.0, -3.0]]).unwrap();
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let y = m.forward(&mut tape, xv, true).unwrap();
            assert_eq!(tape.value(y), &m.infer(&x).unwrap());
        }
    }

    #[test]
    fn init_bounds_and_shape_errors() {
        let m = net(8, Activation::Mish, OutputActivation::None);
        let b = 1.0 / 3f64.sqrt();
        assert!(m.params[0].data.iter().all(|w| w.abs() <= b));
        assert!(m.infer(&Tensor::row_vector(&[1.0, 2.0])).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Mlp::new("x", MlpConfig { layer_widths: vec![2, 1], activation: Activation::Relu, output_activation: OutputActivation::None }, &mut rng).is_err());
    }

    #[test]
    fn polyak_examples() {
        let mut t = vec![Tensor::scalar(0.0)];
        let o = vec![Tensor::scalar(1.0)];
        polyak_update(&mut t, &o, 0.005).unwrap();
        assert_eq!(t[0].item(), 0.005);
        let mut t = vec![Tensor::scalar(0.0)];
        polyak_update(&mut t, &o, 0.5).unwrap();
        polyak_update(&mut t, &o, 0.5).unwrap();
        assert_eq!(t[0].item(), 0.75);
        let mut t = vec![Tensor::scalar(0.3)];
        polyak_update(&mut t, &o, 1.0).unwrap();
        assert_eq!(t[0].item(), 1.0);
        assert!(polyak_update(&mut t, &[Tensor::zeros(1, 2)], 0.5).is_err());
        assert!(polyak_update(&mut t, &o, 0.0).is_err());
    }

    #[test]
    fn clone_gets_fresh_identity() {
        let m = net(4, Activation::Tanh, OutputActivation::None);
        let c = m.clone();
        assert_ne!(m.uid(), c.uid());
        assert_eq!(m, c);
    }
}
