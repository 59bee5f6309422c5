use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpConfig, OutputActivation, Parameterized, Tape, Tensor, Var};

/// Vector-valued critics `Q(s, a, ω̂)` with matching target networks.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticEnsemble {
    pub online: Vec<Mlp>,
    pub target: Vec<Mlp>,
    n_objectives: usize,
}

/// Row-wise `[states ‖ actions ‖ features]`.
pub fn critic_input(states: &Tensor, actions: &Tensor, features: &Tensor) -> Result<Tensor> {
    Tensor::concat_cols(&[states, actions, features])
}

impl CriticEnsemble {
    pub fn new<R: Rng + ?Sized>(
        n_critics: usize,
        input_dim: usize,
        n_objectives: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if n_critics == 0 {
            return Err(Error::invalid("at least one critic is required"));
        }
        let cfg = MlpConfig::new(input_dim, hidden, n_objectives, activation, OutputActivation::None);
        let mut online = Vec::with_capacity(n_critics);
        for k in 0..n_critics {
            online.push(Mlp::new(&format!("critic{k}"), cfg.clone(), rng)?);
        }
        let target = online.iter().enumerate().map(|(k, m)| m.renamed(&format!("target{k}"))).collect();
        Ok(Self {
            online,
            target,
            n_objectives,
        })
    }

    pub fn len(&self) -> usize {
        self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.online.is_empty()
    }

    pub fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    /// Per row, the target critic whose value scalarized by `task` is
    /// smallest supplies the whole vector. Ties go to the lower index.
    pub fn pessimistic_target(&self, input: &Tensor, task: &Tensor) -> Result<Tensor> {
        let values = self.target.iter().map(|m| m.infer(input)).collect::<Result<Vec<_>>>()?;
        Ok(pessimistic_pick(&values, task))
    }

    /// Bellman targets `r + γ (1 - done) Q̄`.
    pub fn bellman_targets(rewards: &Tensor, not_done: &Tensor, next_values: &Tensor, gamma: f64) -> Result<Tensor> {
        let n = rewards.cols;
        let mut y = rewards.clone();
        for r in 0..y.rows {
            let nd = not_done.data[r];
            for j in 0..n {
                let v = &mut y.data[r * n + j];
                if nd != 0.0 {
                    *v += gamma * nd * next_values.data[r * n + j];
                }
                if !v.is_finite() {
                    return Err(Error::Numerical(format!("non-finite critic target for batch row {r}")));
                }
            }
        }
        Ok(y)
    }

    /// Mean over batch and critics of the squared vector error summed over objectives.
    pub fn loss(&self, tape: &mut Tape, input: &Tensor, y: &Tensor) -> Result<Var> {
        let x = tape.constant(input.clone());
        let yv = tape.constant(y.clone());
        let mut total: Option<Var> = None;
        for m in &self.online {
            let q = m.forward(tape, x, true)?;
            let d = tape.sub(q, yv)?;
            let sq = tape.square(d);
            let per = tape.sum_cols(sq);
            let l = tape.mean_all(per);
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        let total = total.expect("non-empty ensemble");
        Ok(tape.scale(total, 1.0 / self.online.len() as f64))
    }

    /// Smallest scalarized online value per row, as a `B x 1` column. The
    /// critics enter frozen so only `input` receives gradients.
    pub fn min_scalarized(&self, tape: &mut Tape, input: Var, task: Var) -> Result<Var> {
        let mut qs = Vec::with_capacity(self.online.len());
        for m in &self.online {
            let q = m.forward(tape, input, false)?;
            let w = tape.mul(q, task)?;
            qs.push(tape.sum_cols(w));
        }
        if qs.len() == 1 {
            Ok(qs[0])
        } else {
            tape.min(&qs)
        }
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.polyak_from(o, tau)?;
        }
        Ok(())
    }
}

/// The online critics alone, for gradient checks that must not perturb the
/// target networks.
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineCritics(pub CriticEnsemble);

impl Parameterized for OnlineCritics {
    fn modules(&self) -> Vec<&Mlp> {
        self.0.online.iter().collect()
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        self.0.online.iter_mut().collect()
    }
}

pub(crate) fn pessimistic_pick(values: &[Tensor], task: &Tensor) -> Tensor {
    let n = values[0].cols;
    let mut out = values[0].clone();
    for r in 0..out.rows {
        let w = task.row(r);
        let score = |t: &Tensor| t.row(r).iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let mut best = score(&values[0]);
        let mut k_best = 0;
        for (k, v) in values.iter().enumerate().skip(1) {
            let s = score(v);
            if s < best {
                best = s;
                k_best = k;
            }
        }
        out.data[r * n..(r + 1) * n].copy_from_slice(values[k_best].row(r));
    }
    out
}

impl Parameterized for CriticEnsemble {
    fn modules(&self) -> Vec<&Mlp> {
        self.online.iter().chain(&self.target).collect()
    }
    fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        self.online.iter_mut().chain(self.target.iter_mut()).collect()
    }
}
