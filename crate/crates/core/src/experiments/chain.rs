//! Two-state, two-action, two-objective chain used to check that the vector
//! critic's scalarizations converge to the scalarized optimal values.
//!
//! Action `-1` in state 0 pays `[1, 0]` and stays; `+1` moves to state 1 for
//! nothing. In state 1, `+1` pays `[0, 2]` and stays; `-1` moves back to
//! state 0 for nothing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::momdp::Preference;
use crate::nn::{Activation, Adam, AdamConfig, Tape, Tensor};
use crate::trainer::{critic_input, CriticEnsemble};

pub const ACTIONS: [f64; 2] = [-1.0, 1.0];

/// `(reward, next state)` for state `s` and action index `a`.
pub fn chain_step(s: usize, a: usize) -> ([f64; 2], usize) {
    match (s, a) {
        (0, 0) => ([1.0, 0.0], 0),
        (0, _) => ([0.0, 0.0], 1),
        (_, 0) => ([0.0, 0.0], 0),
        _ => ([0.0, 2.0], 1),
    }
}

/// Scalarized optimal action values `Q*[s][a]` by value iteration.
pub fn chain_value_iteration(w: &Preference, gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    loop {
        let mut next = [[0.0; 2]; 2];
        let mut delta = 0.0f64;
        for s in 0..2 {
            for a in 0..2 {
                let (r, s2) = chain_step(s, a);
                let v = q[s2][0].max(q[s2][1]);
                next[s][a] = w[0] * r[0] + w[1] * r[1] + gamma * v;
                delta = delta.max((next[s][a] - q[s][a]).abs());
            }
        }
        q = next;
        if delta < 1e-13 {
            return q;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub gamma: f64,
    pub hidden: Vec<usize>,
    /// Target networks are copied after every phase of `steps_per_phase`
    /// full-batch updates. The learning rate decays over phases.
    pub phases: usize,
    pub steps_per_phase: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            hidden: vec![32, 32],
            phases: 60,
            steps_per_phase: 200,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub prefs: Vec<Vec<f64>>,
    /// `ωᵀQ(s, a, ω)` of the trained online critic.
    pub learned: Vec<[[f64; 2]; 2]>,
    pub oracle: Vec<[[f64; 2]; 2]>,
    pub max_abs_error: f64,
}

pub fn chain_prefs() -> Vec<Preference> {
    [1.0, 0.5, 0.0].iter().map(|&w| Preference::pair(w).expect("valid pair")).collect()
}

/// Fits a preference-conditioned vector critic to the chain with greedy
/// scalarized bootstrapping on every `(s, a, ω)` row.
pub fn fit_chain_critic(cfg: &ChainConfig) -> Result<ChainReport> {
    let prefs = chain_prefs();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut critics = CriticEnsemble::new(2, 4, 2, &cfg.hidden, Activation::Mish, &mut rng)?;
    let mut opt = Adam::new(&critics.online, AdamConfig::with_lr(cfg.lr));

    let mut rows = Vec::new();
    for p in &prefs {
        for s in 0..2 {
            for a in 0..2 {
                rows.push((p.clone(), s, a));
            }
        }
    }
    let col = |f: &dyn Fn(&(Preference, usize, usize)) -> Vec<f64>| {
        Tensor::from_rows(&rows.iter().map(f).collect::<Vec<_>>())
    };
    let states = col(&|r| vec![r.1 as f64])?;
    let actions = col(&|r| vec![ACTIONS[r.2]])?;
    let features = col(&|r| r.0.weights().to_vec())?;
    let rewards = col(&|r| chain_step(r.1, r.2).0.to_vec())?;
    let next_states = col(&|r| vec![chain_step(r.1, r.2).1 as f64])?;
    let not_done = Tensor::full(rows.len(), 1, 1.0);
    let input = critic_input(&states, &actions, &features)?;
    let next_inputs = ACTIONS
        .iter()
        .map(|&a| critic_input(&next_states, &Tensor::full(rows.len(), 1, a), &features))
        .collect::<Result<Vec<_>>>()?;

    for phase in 0..cfg.phases {
        // Geometric decay to a hundredth of the initial rate.
        opt.config.learning_rate = cfg.lr * 0.01f64.powf(phase as f64 / cfg.phases as f64);
        let candidates = next_inputs
            .iter()
            .map(|x| critics.pessimistic_target(x, &features))
            .collect::<Result<Vec<_>>>()?;
        let mut next_q = candidates[0].clone();
        for r in 0..rows.len() {
            let score = |t: &Tensor| t.row(r).iter().zip(features.row(r)).map(|(q, w)| q * w).sum::<f64>();
            if score(&candidates[1]) > score(&candidates[0]) {
                next_q.row_mut(r).copy_from_slice(candidates[1].row(r));
            }
        }
        let y = CriticEnsemble::bellman_targets(&rewards, &not_done, &next_q, cfg.gamma)?;
        for _ in 0..cfg.steps_per_phase {
            let mut tape = Tape::new();
            let l = critics.loss(&mut tape, &input, &y)?;
            let g = tape.backward(l)?;
            opt.step(&mut critics.online, &g)?;
        }
        critics.soft_update(1.0)?;
    }

    let mut learned = Vec::new();
    let mut oracle = Vec::new();
    let mut max_abs_error = 0.0f64;
    let values = critics.online.iter().map(|m| m.infer(&input)).collect::<Result<Vec<_>>>()?;
    for (k, p) in prefs.iter().enumerate() {
        let star = chain_value_iteration(p, cfg.gamma);
        let mut got = [[0.0; 2]; 2];
        for s in 0..2 {
            for a in 0..2 {
                let r = 4 * k + 2 * s + a;
                // Each online critic separately; the worst one counts.
                for q in &values {
                    let v = p[0] * q.get(r, 0) + p[1] * q.get(r, 1);
                    max_abs_error = max_abs_error.max((v - star[s][a]).abs());
                    got[s][a] = v;
                }
            }
        }
        learned.push(got);
        oracle.push(star);
    }
    Ok(ChainReport {
        prefs: prefs.iter().map(|p| p.weights().to_vec()).collect(),
        learned,
        oracle,
        max_abs_error,
    })
}
