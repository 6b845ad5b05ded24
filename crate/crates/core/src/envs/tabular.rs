use crate::envs::{Environment, Step};
use crate::error::{structural, Result};
use crate::fmdp::{ActionSpaceSpec, GlobalAction};

/// Single-state FMDP: every action terminates, +1 only for the jointly
/// optimal sub-action tuple and -1 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCreditConfig {
    pub dims: usize,
    pub n: usize,
    pub optimal: GlobalAction,
}

impl TabularCreditConfig {
    /// Optimal sub-action is index 0 in every dimension.
    pub fn new(dims: usize, n: usize) -> Self {
        Self { dims, n, optimal: GlobalAction::new(vec![0; dims]) }
    }

    pub fn validate(&self) -> Result<ActionSpaceSpec> {
        let spec = ActionSpaceSpec::uniform(self.dims, self.n)?;
        spec.validate(&self.optimal)?;
        Ok(spec)
    }
}

/// Reward and termination for one action. Episodes are always one step long.
pub fn tabular_credit_step(config: &TabularCreditConfig, action: &GlobalAction) -> Result<(f32, bool)> {
    if action.len() != config.dims || action.iter().any(|&a| a >= config.n) {
        return Err(structural!("invalid action {:?} for {}x{} credit task", action.0, config.dims, config.n));
    }
    let reward = if *action == config.optimal { 1.0 } else { -1.0 };
    Ok((reward, true))
}

#[derive(Debug, Clone)]
pub struct TabularCredit {
    config: TabularCreditConfig,
    spec: ActionSpaceSpec,
}

impl TabularCredit {
    pub fn new(config: TabularCreditConfig) -> Result<Self> {
        let spec = config.validate()?;
        Ok(Self { config, spec })
    }
}

impl Environment for TabularCredit {
    fn action_space(&self) -> &ActionSpaceSpec {
        &self.spec
    }

    fn observation_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Vec<f32> {
        vec![1.0]
    }

    fn step(&mut self, action: &GlobalAction) -> Result<Step> {
        let (reward, done) = tabular_credit_step(&self.config, action)?;
        // The terminal state is encoded as the zero vector.
        Ok(Step { observation: vec![0.0], reward, done })
    }
}
