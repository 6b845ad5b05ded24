//! Experiment runner: TOML run configs, training loops and CSV output.

pub mod config;
pub mod experiments;
pub mod train;

pub use config::RunConfig;
pub use experiments::{run_tabular_credit, run_theory, CreditSummary, TheorySummary};
pub use train::{point_mass_baselines, run_eval, run_train, train_seed, SeedOutcome};
