use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, Step};
use crate::error::{domain, Result};
use crate::fmdp::{ActionSpaceSpec, GlobalAction};

/// Gaussian white noise on rewards and/or observations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseWrapperConfig {
    pub reward_sigma: f32,
    pub state_sigma: f32,
}

impl NoiseWrapperConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("reward_sigma", self.reward_sigma), ("state_sigma", self.state_sigma)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(domain!("{name} must be a finite non-negative number, got {s}"));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.reward_sigma == 0.0 && self.state_sigma == 0.0
    }
}

/// Perturbs what the agent sees. The wrapped environment's own state and
/// dynamics are untouched.
#[derive(Debug, Clone)]
pub struct NoisyEnv<E> {
    inner: E,
    reward_noise: Option<Normal<f32>>,
    state_noise: Option<Normal<f32>>,
    rng: ChaCha8Rng,
}

impl<E: Environment> NoisyEnv<E> {
    pub fn new(inner: E, config: NoiseWrapperConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let make = |s: f32| (s > 0.0).then(|| Normal::new(0.0, s).expect("validated sigma"));
        Ok(Self {
            inner,
            reward_noise: make(config.reward_sigma),
            state_noise: make(config.state_sigma),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    fn observe(&mut self, mut obs: Vec<f32>) -> Vec<f32> {
        if let Some(noise) = &self.state_noise {
            for x in &mut obs {
                *x += noise.sample(&mut self.rng);
            }
        }
        obs
    }
}

impl<E: Environment> Environment for NoisyEnv<E> {
    fn action_space(&self) -> &ActionSpaceSpec {
        self.inner.action_space()
    }

    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }

    fn reset(&mut self) -> Vec<f32> {
        let obs = self.inner.reset();
        self.observe(obs)
    }

    fn step(&mut self, action: &GlobalAction) -> Result<Step> {
        let Step { observation, mut reward, done } = self.inner.step(action)?;
        if let Some(noise) = &self.reward_noise {
            reward += noise.sample(&mut self.rng);
        }
        Ok(Step { observation: self.observe(observation), reward, done })
    }
}
