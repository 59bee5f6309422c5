//! Point mass on `[0, 1]`. Objective 1 pays forward progress, objective 2
//! pays energy thrift `1 - |a|`.

use rand_chacha::ChaCha8Rng;

use super::{EnvSpec, EnvState, Inner, LINEWORLD};
use crate::momdp::VectorReturn;

const HORIZON: usize = 32;
/// Position change per unit action.
const SPEED: f64 = 1.0 / 32.0;

#[derive(Clone, Debug)]
pub struct LineWorld {
    spec: EnvSpec,
}

impl Default for LineWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl LineWorld {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: LINEWORLD.to_string(),
                n_objectives: 2,
                state_dim: 2,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                horizon: HORIZON,
                reward_bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            },
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn observe(position: f64, step: usize) -> Vec<f64> {
        vec![position, (HORIZON - step) as f64 / HORIZON as f64]
    }

    pub(super) fn reset(&self, rng: ChaCha8Rng) -> EnvState {
        EnvState {
            observation: Self::observe(0.0, 0),
            step_count: 0,
            terminal: false,
            rng,
            inner: Inner::Line { position: 0.0 },
        }
    }

    pub(super) fn step(&self, state: &EnvState, action: &[f64]) -> (EnvState, VectorReturn) {
        let Inner::Line { position } = state.inner else {
            unreachable!("lineworld state expected")
        };
        let a = action[0];
        let next = (position + a * SPEED).clamp(0.0, 1.0);
        let progress = ((next - position) / SPEED).max(0.0);
        let thrift = 1.0 - a.abs();
        let step = state.step_count + 1;
        let next_state = EnvState {
            observation: Self::observe(next, step),
            step_count: step,
            terminal: step >= HORIZON,
            rng: state.rng.clone(),
            inner: Inner::Line { position: next },
        };
        (next_state, VectorReturn::new(vec![progress, thrift]))
    }

    /// `{(32c, 32(1 - c))}` for 101 equispaced `c`.
    pub fn oracle_front(&self) -> Vec<VectorReturn> {
        let h = HORIZON as f64;
        (0..=100)
            .rev()
            .map(|k| {
                let c = k as f64 / 100.0;
                VectorReturn::new(vec![c * h, (1.0 - c) * h])
            })
            .collect()
    }

    /// Expert action for a preference: constant throttle `ω1`.
    pub fn expert_action(&self, w1: f64) -> Vec<f64> {
        vec![w1]
    }
}

#[cfg(test)]
mod tests {
    use crate::envs::{make_env, LINEWORLD};

    #[test]
    fn null_and_full_throttle_rollouts() {
        let (env, s0) = make_env(LINEWORLD, 0).unwrap();
        for (a, expected) in [(0.0, [0.0, 32.0]), (1.0, [32.0, 0.0])] {
            let mut s = s0.clone();
            let mut ret = [0.0; 2];
            while !s.terminal {
                let (n, r, _) = env.step(&s, &[a]).unwrap();
                ret[0] += r[0];
                ret[1] += r[1];
                s = n;
            }
            assert_eq!(ret, expected);
        }
    }

    #[test]
    fn single_step_examples() {
        let (env, mut s) = make_env(LINEWORLD, 0).unwrap();
        for _ in 0..16 {
            s = env.step(&s, &[1.0]).unwrap().0;
        }
        assert_eq!(s.observation[0], 0.5);
        let (n, r, _) = env.step(&s, &[0.0]).unwrap();
        assert_eq!(n.observation[0], 0.5);
        assert_eq!(r.values(), &[0.0, 1.0]);

        let mut s = env.reset(0);
        for _ in 0..31 {
            s = env.step(&s, &[1.0]).unwrap().0;
        }
        s = env.step(&s, &[0.0]).unwrap().0;
        assert!(s.terminal);
        // Out-of-bounds actions are clipped.
        let s = env.reset(0);
        let (n, r, _) = env.step(&s, &[2.0]).unwrap();
        assert_eq!(n.observation[0], 1.0 / 32.0);
        assert_eq!(r.values(), &[1.0, 0.0]);
    }

    #[test]
    fn wall_saturation() {
        let env = crate::envs::LineWorld::new();
        let s = crate::envs::EnvState {
            observation: vec![1.0, 0.5],
            step_count: 16,
            terminal: false,
            rng: rand::SeedableRng::seed_from_u64(0),
            inner: crate::envs::Inner::Line { position: 1.0 },
        };
        let (n, r) = env.step(&s, &[1.0]);
        assert_eq!(n.observation[0], 1.0);
        assert_eq!(r.values(), &[0.0, 0.0]);
    }

    #[test]
    fn oracle_front_shape() {
        let (env, _) = make_env(LINEWORLD, 0).unwrap();
        let front = env.oracle_pareto_front().unwrap();
        assert_eq!(front.len(), 101);
        assert_eq!(front[0].values(), &[32.0, 0.0]);
        assert_eq!(front[100].values(), &[0.0, 32.0]);
    }
}
