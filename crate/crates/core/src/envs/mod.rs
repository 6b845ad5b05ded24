//! Desk-scale factorisable environments.

mod noise;
mod point_mass;
mod tabular;

pub use noise::{NoiseWrapperConfig, NoisyEnv};
pub use point_mass::{level, point_mass_step, PointMass, PointMassConfig};
pub use tabular::{tabular_credit_step, TabularCredit, TabularCreditConfig};

use crate::error::Result;
use crate::fmdp::{ActionSpaceSpec, GlobalAction};

/// Outcome of one environment step, as seen by the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f32>,
    pub reward: f32,
    pub done: bool,
}

/// An episodic environment with a factorised action space.
pub trait Environment {
    fn action_space(&self) -> &ActionSpaceSpec;
    fn observation_dim(&self) -> usize;
    /// Start a new episode and return the first observation.
    fn reset(&mut self) -> Vec<f32>;
    fn step(&mut self, action: &GlobalAction) -> Result<Step>;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn action_space(&self) -> &ActionSpaceSpec {
        (**self).action_space()
    }
    fn observation_dim(&self) -> usize {
        (**self).observation_dim()
    }
    fn reset(&mut self) -> Vec<f32> {
        (**self).reset()
    }
    fn step(&mut self, action: &GlobalAction) -> Result<Step> {
        (**self).step(action)
    }
}

/// Environment selection, resolved from a run config.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    TabularCredit(TabularCreditConfig),
    PointMass(PointMassConfig),
}

impl EnvKind {
    pub fn action_space(&self) -> Result<ActionSpaceSpec> {
        match self {
            EnvKind::TabularCredit(c) => ActionSpaceSpec::uniform(c.dims, c.n),
            EnvKind::PointMass(c) => ActionSpaceSpec::uniform(c.dims, c.bins),
        }
    }

    /// Build a fresh instance. Noise is layered on only when a sigma is nonzero.
    pub fn build(&self, noise: &NoiseWrapperConfig, seed: u64) -> Result<Box<dyn Environment + Send>> {
        let base: Box<dyn Environment + Send> = match self {
            EnvKind::TabularCredit(c) => Box::new(TabularCredit::new(c.clone())?),
            EnvKind::PointMass(c) => Box::new(PointMass::new(c.clone(), seed)?),
        };
        if noise.is_identity() {
            Ok(base)
        } else {
            Ok(Box::new(NoisyEnv::new(base, noise.clone(), seed ^ 0x9E37_79B9_7F4A_7C15)?))
        }
    }
}
