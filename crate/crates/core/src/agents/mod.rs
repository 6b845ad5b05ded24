//! DecQN, DecQN-Sum and REValueD.
//!
//! All three share one update path: an ensemble of `K` utility networks
//! (`K = 1` for the DecQN variants) is trained toward a bootstrap target
//! built from the across-critic mean of the target networks. REValueD adds
//! the weighted regulariser scaled by `beta`; with `beta = 0` and `K = 1` it
//! is exactly DecQN.

mod config;
mod critic;
mod neural;
mod tabular;

pub use config::{AgentConfig, Algorithm, WeightFn};
pub use critic::EnsembleCritic;
pub use neural::{epsilon_at, Agent, ActMode, UpdateReport};
pub use tabular::{
    run_credit_experiment, tabular_update, CreditCurve, CreditExperimentConfig, CreditPoint, TabularConfig,
    TabularUtilities,
};
