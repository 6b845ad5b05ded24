//! Value-decomposition Q-learning for factorisable action spaces.
//!
//! The global action space is a Cartesian product of sub-action sets and the
//! global Q-value is the mean (DecQN) or sum (DecQN-Sum) of per-dimension
//! utilities, so greedy action selection reduces to one argmax per dimension.
//! REValueD adds an ensemble of critics whose mean utilities form the
//! bootstrap target, plus a weighted regulariser that keeps each selected
//! utility close to its target-network value.
//!
//! Modules:
//! - [`fmdp`]: action-space factorisation, global actions, transitions.
//! - [`envs`]: the tabular credit-assignment FMDP, a point-mass control task
//!   and Gaussian observation/reward noise.
//! - [`theory`]: closed-form and Monte Carlo moments of the target difference.
//! - [`net`]: residual MLP with per-dimension heads and manual gradients.
//! - [`replay`]: n-step assembly and proportional prioritized replay.
//! - [`agents`]: DecQN / DecQN-Sum / REValueD, neural and tabular.
//! - [`metrics`]: evaluation, gradient-norm detrending and CVaR.

pub mod agents;
pub mod envs;
pub mod error;
pub mod fmdp;
pub mod metrics;
pub mod net;
pub mod replay;
pub mod theory;

pub use error::{Error, Result};
pub use fmdp::{ActionSpaceSpec, Decomposition, GlobalAction, Transition};
