use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::fmdp::Decomposition;
use crate::net::AdamConfig;
use crate::replay::ReplayConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Decqn,
    DecqnSum,
    Revalued,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Decqn => "decqn",
            Algorithm::DecqnSum => "decqn_sum",
            Algorithm::Revalued => "revalued",
        }
    }

    pub fn decomposition(self) -> Decomposition {
        match self {
            Algorithm::DecqnSum => Decomposition::Sum,
            Algorithm::Decqn | Algorithm::Revalued => Decomposition::Mean,
        }
    }
}

/// Regulariser weight as a function of the per-utility TD error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFn {
    /// `1 - exp(-|δ|)`
    #[default]
    Exponential,
    /// `min(δ², 1)`
    Quadratic,
}

impl WeightFn {
    pub fn weight(self, delta: f64) -> f64 {
        match self {
            WeightFn::Exponential => 1.0 - (-delta.abs()).exp(),
            WeightFn::Quadratic => (delta * delta).min(1.0),
        }
    }
}

/// Agent hyperparameters; defaults follow the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    /// Ensemble size. `None` resolves to 10 for REValueD and 1 otherwise.
    pub ensemble_size: Option<usize>,
    /// Regulariser coefficient. `None` resolves to 0.5 for REValueD and 0 otherwise.
    pub beta: Option<f64>,
    pub weight_fn: WeightFn,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub epsilon_decay: f64,
    pub huber_kappa: f64,
    pub grad_clip: f64,
    /// Polyak coefficient for the target networks.
    pub target_update: f64,
    pub hidden: usize,
    pub adam: AdamConfig,
    pub replay: ReplayConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Revalued,
            ensemble_size: None,
            beta: None,
            weight_fn: WeightFn::Exponential,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_min: 0.05,
            epsilon_decay: 0.99995,
            huber_kappa: 1.0,
            grad_clip: 40.0,
            target_update: 0.005,
            hidden: 512,
            adam: AdamConfig::default(),
            replay: ReplayConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        Self { algorithm, ..Default::default() }
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size.unwrap_or(match self.algorithm {
            Algorithm::Revalued => 10,
            _ => 1,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(match self.algorithm {
            Algorithm::Revalued => 0.5,
            _ => 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.ensemble_size();
        let beta = self.beta();
        if k == 0 {
            return Err(domain!("agent.ensemble_size must be at least 1"));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(domain!("agent.beta must be non-negative, got {beta}"));
        }
        if self.algorithm != Algorithm::Revalued && (k != 1 || beta != 0.0) {
            return Err(domain!(
                "agent.algorithm = {} requires ensemble_size = 1 and beta = 0",
                self.algorithm.name()
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(domain!("agent.gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_min)
            || !(self.epsilon_min..=1.0).contains(&self.epsilon_start)
            || !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0)
        {
            return Err(domain!("agent epsilon schedule must satisfy 0 <= min <= start <= 1, 0 < decay <= 1"));
        }
        if !(self.target_update > 0.0 && self.target_update <= 1.0) {
            return Err(domain!("agent.target_update must lie in (0, 1]"));
        }
        if !(self.huber_kappa > 0.0 && self.grad_clip > 0.0 && self.adam.lr > 0.0) {
            return Err(domain!("agent.huber_kappa, grad_clip and adam.lr must be positive"));
        }
        if self.hidden == 0 {
            return Err(domain!("agent.hidden must be at least 1"));
        }
        self.replay.validate()
    }
}
