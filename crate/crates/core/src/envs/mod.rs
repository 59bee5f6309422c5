//! Deterministic toy multi-objective environments with exactly computable
//! Pareto fronts, and the scripted behavior policies used to build datasets.

mod lineworld;
mod scripted;
mod treasure;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use lineworld::LineWorld;
pub use scripted::{Quality, ScriptedBehaviorPolicy};
pub use treasure::{Treasure, TreasureGrid, TREASURE_GRID};

use crate::error::{Error, Result};
use crate::momdp::VectorReturn;

pub const LINEWORLD: &str = "mo-lineworld";
pub const TREASURE: &str = "mo-treasure";

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub n_objectives: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub horizon: usize,
    pub reward_bounds: Vec<(f64, f64)>,
}

impl EnvSpec {
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Inner {
    Line { position: f64 },
    Grid { row: usize, col: usize },
}

/// Episode state. Environments never mutate it in place: `step` returns a new one.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub step_count: usize,
    pub terminal: bool,
    pub rng: ChaCha8Rng,
    pub(crate) inner: Inner,
}

/// One of the shipped environments.
#[derive(Clone, Debug)]
pub enum Env {
    LineWorld(LineWorld),
    Treasure(Treasure),
}

/// Builds an environment by name and returns it with its initial state.
pub fn make_env(name: &str, seed: u64) -> Result<(Env, EnvState)> {
    let env = Env::by_name(name)?;
    let state = env.reset(seed);
    Ok((env, state))
}

impl Env {
    pub fn by_name(name: &str) -> Result<Env> {
        match name {
            LINEWORLD => Ok(Env::LineWorld(LineWorld::new())),
            TREASURE => Ok(Env::Treasure(Treasure::new(TreasureGrid::parse(TREASURE_GRID)?))),
            other => Err(Error::invalid(format!(
                "unknown environment `{other}` (expected {LINEWORLD} or {TREASURE})"
            ))),
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        match self {
            Env::LineWorld(e) => e.spec(),
            Env::Treasure(e) => e.spec(),
        }
    }

    pub fn reset(&self, seed: u64) -> EnvState {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Env::LineWorld(e) => e.reset(rng),
            Env::Treasure(e) => e.reset(rng),
        }
    }

    /// Advances one step. Out-of-bounds actions are clipped.
    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<(EnvState, VectorReturn, bool)> {
        if state.terminal || state.step_count >= self.spec().horizon {
            return Err(Error::IllegalTransition(format!(
                "{} episode already ended at step {}",
                self.spec().name,
                state.step_count
            )));
        }
        if action.len() != self.spec().action_dim {
            return Err(Error::invalid(format!(
                "action has dimension {}, {} expects {}",
                action.len(),
                self.spec().name,
                self.spec().action_dim
            )));
        }
        let action = self.spec().clip_action(action);
        let (next, reward) = match self {
            Env::LineWorld(e) => e.step(state, &action),
            Env::Treasure(e) => e.step(state, &action),
        };
        let done = next.terminal;
        Ok((next, reward, done))
    }

    /// The exact set of non-dominated undiscounted episode returns.
    pub fn oracle_pareto_front(&self) -> Result<Vec<VectorReturn>> {
        match self {
            Env::LineWorld(e) => Ok(e.oracle_front()),
            Env::Treasure(e) => Ok(e.oracle_front()),
        }
    }
}

/// Free-function form of [`Env::oracle_pareto_front`].
pub fn oracle_pareto_front(env: &Env) -> Result<Vec<VectorReturn>> {
    env.oracle_pareto_front()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pareto_filter;
    use crate::momdp::{dominates, preference_grid, scalarize, Preference};
    use rand::Rng;

    fn rollout(env: &Env, seed: u64, mut policy: impl FnMut(&EnvState) -> Vec<f64>) -> VectorReturn {
        let mut state = env.reset(seed);
        let mut ret = VectorReturn::zeros(env.spec().n_objectives);
        loop {
            let a = policy(&state);
            let (next, r, done) = env.step(&state, &a).unwrap();
            ret += &r;
            state = next;
            if done {
                return ret;
            }
        }
    }

    #[test]
    fn unknown_env_rejected() {
        assert!(matches!(make_env("mo-halfcheetah", 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn stepping_terminal_state_is_illegal() {
        let (env, mut s) = make_env(LINEWORLD, 0).unwrap();
        for _ in 0..32 {
            s = env.step(&s, &[0.0]).unwrap().0;
        }
        assert!(s.terminal);
        assert!(matches!(env.step(&s, &[0.0]), Err(Error::IllegalTransition(_))));
    }

    #[test]
    fn determinism_bit_identical() {
        for name in [LINEWORLD, TREASURE] {
            let env = Env::by_name(name).unwrap();
            let run = || {
                let mut rng = ChaCha8Rng::seed_from_u64(99);
                let mut s = env.reset(5);
                let mut trace = Vec::new();
                while !s.terminal {
                    let a: Vec<f64> = (0..env.spec().action_dim)
                        .map(|_| rng.random_range(-1.5..1.5))
                        .collect();
                    let (n, r, _) = env.step(&s, &a).unwrap();
                    trace.push((n.observation.clone(), r));
                    s = n;
                }
                trace
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn rewards_within_bounds_and_oracle_sound() {
        for name in [LINEWORLD, TREASURE] {
            let env = Env::by_name(name).unwrap();
            let front = env.oracle_pareto_front().unwrap();
            assert_eq!(pareto_filter(&front), front);
            let bounds = env.spec().reward_bounds.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for ep in 0..10_000 {
                let mut s = env.reset(ep);
                let mut ret = VectorReturn::zeros(2);
                while !s.terminal {
                    let a: Vec<f64> = (0..env.spec().action_dim)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect();
                    let (n, r, _) = env.step(&s, &a).unwrap();
                    for (v, (lo, hi)) in r.values().iter().zip(&bounds) {
                        assert!(*v >= *lo && *v <= *hi, "{name}: reward {v} outside [{lo}, {hi}]");
                    }
                    ret += &r;
                    s = n;
                }
                for p in &front {
                    assert!(!dominates(&ret, p).unwrap(), "{name}: {ret:?} dominates oracle {p:?}");
                }
            }
        }
    }

    #[test]
    fn expert_optimality_treasure() {
        let env = Env::by_name(TREASURE).unwrap();
        let front = env.oracle_pareto_front().unwrap();
        for pref in preference_grid(2, 11).unwrap() {
            let policy = ScriptedBehaviorPolicy::expert(pref.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let ret = rollout(&env, 0, |s| policy.action(&env, s, &mut rng).unwrap());
            let best = front
                .iter()
                .map(|p| scalarize(&pref, p).unwrap())
                .fold(f64::MIN, f64::max);
            assert_eq!(scalarize(&pref, &ret).unwrap(), best, "pref {pref}");
        }
    }

    #[test]
    fn expert_lineworld_lies_on_front() {
        let env = Env::by_name(LINEWORLD).unwrap();
        for pref in preference_grid(2, 11).unwrap() {
            let policy = ScriptedBehaviorPolicy::expert(pref.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let ret = rollout(&env, 0, |s| policy.action(&env, s, &mut rng).unwrap());
            assert!((ret[0] + ret[1] - 32.0).abs() < 1e-6);
            assert!((ret[0] - 32.0 * pref[0]).abs() < 1e-6);
        }
        // At the corners and the midpoint the expert also attains the front maximum.
        let front = env.oracle_pareto_front().unwrap();
        for w in [0.0, 0.5, 1.0] {
            let pref = Preference::pair(w).unwrap();
            let policy = ScriptedBehaviorPolicy::expert(pref.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let ret = rollout(&env, 0, |s| policy.action(&env, s, &mut rng).unwrap());
            let best = front
                .iter()
                .map(|p| scalarize(&pref, p).unwrap())
                .fold(f64::MIN, f64::max);
            assert!((scalarize(&pref, &ret).unwrap() - best).abs() < 1e-6);
        }
    }
}
