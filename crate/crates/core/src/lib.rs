//! Policy-regularized offline multi-objective reinforcement learning.
//!
//! A preference-conditioned actor-critic trained from offline data with a
//! behavior-cloning regularizer (MSE, CVAE or diffusion actor), filtering of
//! preference-inconsistent trajectories, and deployment-time adaptation of
//! the regularization weight. Toy environments ship with exact Pareto fronts
//! so every learned result can be checked against an oracle.

pub mod adaptation;
pub mod baselines;
pub mod dataset;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod momdp;
pub mod nn;
pub mod noise;
pub mod regularizers;
pub mod trainer;

pub use error::{Error, Result};
pub use momdp::{
    augment, cosine_distance, dominates, l1_normalize, scalarize, AugmentedPreference, Preference,
    Trajectory, Transition, VectorReturn,
};
