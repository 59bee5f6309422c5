use serde::{Deserialize, Serialize};

use super::mlp::Parameterized;
use super::tape::Gradients;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam state for every parameter of a model, in module declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step_count: u64,
    m: Vec<Vec<Tensor>>,
    v: Vec<Vec<Tensor>>,
}

impl Adam {
    pub fn new<M: Parameterized + ?Sized>(model: &M, config: AdamConfig) -> Self {
        let zeros = |model: &M| -> Vec<Vec<Tensor>> {
            model
                .modules()
                .iter()
                .map(|m| m.params().iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect())
                .collect()
        };
        Self {
            config,
            step_count: 0,
            m: zeros(model),
            v: zeros(model),
        }
    }

    /// One bias-corrected Adam update. Parameters without a gradient entry
    /// are left untouched. Any non-finite gradient aborts the whole step.
    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M, grads: &Gradients) -> Result<()> {
        let mut modules = model.modules_mut();
        if modules.len() != self.m.len() {
            return Err(Error::invalid("optimizer state does not match the model"));
        }
        for module in &modules {
            for i in 0..module.params().len() {
                if let Some(g) = grads.get(module.key(i)) {
                    if g.shape() != module.params()[i].shape() {
                        return Err(Error::invalid(format!(
                            "gradient shape {:?} does not match `{}`",
                            g.shape(),
                            module.param_name(i)
                        )));
                    }
                    if !g.all_finite() {
                        return Err(Error::NonFiniteGradient {
                            param: module.param_name(i),
                        });
                    }
                }
            }
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (k, module) in modules.iter_mut().enumerate() {
            for i in 0..module.params().len() {
                let Some(g) = grads.get(module.key(i)) else { continue };
                let m = &mut self.m[k][i].data;
                let v = &mut self.v[k][i].data;
                let p = &mut module.params_mut()[i].data;
                for j in 0..p.len() {
                    let gj = g.data[j];
                    m[j] = b1 * m[j] + (1.0 - b1) * gj;
                    v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                    let mh = m[j] / c1;
                    let vh = v[j] / c2;
                    p[j] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    pub fn moments(&self) -> (&[Vec<Tensor>], &[Vec<Tensor>]) {
        (&self.m, &self.v)
    }
}
