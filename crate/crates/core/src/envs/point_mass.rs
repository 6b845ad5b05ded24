use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::{Environment, Step};
use crate::error::{domain, structural, Result};
use crate::fmdp::{ActionSpaceSpec, GlobalAction};

/// A point in `[-1, 1]^N` pushed toward a fixed target by discretised
/// per-axis thrust. Each axis is one action dimension with `bins` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassConfig {
    pub dims: usize,
    /// Odd, so the middle bin is the zero ("off") level.
    pub bins: usize,
    pub step_scale: f32,
    pub horizon: usize,
    pub target: Vec<f32>,
    /// Fixed start; drawn uniformly from the box when `None`.
    pub initial_state: Option<Vec<f32>>,
}

impl PointMassConfig {
    pub fn validate(&self) -> Result<ActionSpaceSpec> {
        if self.bins < 3 || self.bins % 2 == 0 {
            return Err(domain!("point-mass bins must be odd and at least 3, got {}", self.bins));
        }
        if self.horizon == 0 {
            return Err(domain!("point-mass horizon must be at least 1"));
        }
        if !(self.step_scale.is_finite() && self.step_scale > 0.0) {
            return Err(domain!("point-mass step_scale must be positive, got {}", self.step_scale));
        }
        if self.target.len() != self.dims {
            return Err(structural!("target has {} coordinates for {} dims", self.target.len(), self.dims));
        }
        if self.target.iter().any(|t| !(-1.0..=1.0).contains(t)) {
            return Err(domain!("target must lie in [-1, 1]^N"));
        }
        if let Some(s) = &self.initial_state {
            if s.len() != self.dims || s.iter().any(|x| !(-1.0..=1.0).contains(x)) {
                return Err(domain!("initial_state must be a point of [-1, 1]^N"));
            }
        }
        ActionSpaceSpec::uniform(self.dims, self.bins)
    }
}

/// Thrust level of `bin`: equally spaced over `[-1, 1]`.
pub fn level(bin: usize, bins: usize) -> f32 {
    -1.0 + 2.0 * bin as f32 / (bins - 1) as f32
}

/// Pure dynamics. `steps_taken` counts steps already taken this episode.
pub fn point_mass_step(
    state: &[f32],
    steps_taken: usize,
    action: &GlobalAction,
    config: &PointMassConfig,
) -> Result<(Vec<f32>, f32, bool)> {
    if action.len() != config.dims || action.iter().any(|&a| a >= config.bins) {
        return Err(structural!("invalid action {:?} for point mass with {} dims", action.0, config.dims));
    }
    if state.len() != config.dims {
        return Err(structural!("state has {} coordinates for {} dims", state.len(), config.dims));
    }
    let next: Vec<f32> = state
        .iter()
        .zip(action.iter())
        .map(|(&x, &a)| (x + config.step_scale * level(a, config.bins)).clamp(-1.0, 1.0))
        .collect();
    let dist_sq: f32 = next.iter().zip(&config.target).map(|(x, t)| (x - t) * (x - t)).sum();
    let reward = -dist_sq.sqrt() / (config.dims as f32).sqrt();
    Ok((next, reward, steps_taken + 1 >= config.horizon))
}

#[derive(Debug, Clone)]
pub struct PointMass {
    config: PointMassConfig,
    spec: ActionSpaceSpec,
    state: Vec<f32>,
    steps: usize,
    rng: ChaCha8Rng,
}

impl PointMass {
    pub fn new(config: PointMassConfig, seed: u64) -> Result<Self> {
        let spec = config.validate()?;
        let state = vec![0.0; config.dims];
        Ok(Self { config, spec, state, steps: 0, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Internal (noise-free) position.
    pub fn state(&self) -> &[f32] {
        &self.state
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.config
    }

    /// Per-axis move toward the target; the reference policy for evaluation.
    pub fn oracle_action(&self, state: &[f32]) -> GlobalAction {
        let half = self.config.bins / 2;
        let acts = state
            .iter()
            .zip(&self.config.target)
            .map(|(&x, &t)| {
                let gap = t - x;
                if gap.abs() <= 0.5 * self.config.step_scale {
                    half
                } else if gap > 0.0 {
                    self.config.bins - 1
                } else {
                    0
                }
            })
            .collect();
        GlobalAction::new(acts)
    }
}

impl Environment for PointMass {
    fn action_space(&self) -> &ActionSpaceSpec {
        &self.spec
    }

    fn observation_dim(&self) -> usize {
        self.config.dims
    }

    fn reset(&mut self) -> Vec<f32> {
        self.steps = 0;
        self.state = match &self.config.initial_state {
            Some(s) => s.clone(),
            None => (0..self.config.dims).map(|_| self.rng.random_range(-1.0f32..=1.0)).collect(),
        };
        self.state.clone()
    }

    fn step(&mut self, action: &GlobalAction) -> Result<Step> {
        let (next, reward, done) = point_mass_step(&self.state, self.steps, action, &self.config)?;
        self.state = next;
        self.steps += 1;
        Ok(Step { observation: self.state.clone(), reward, done })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(dims: usize, bins: usize) -> PointMassConfig {
        PointMassConfig {
            dims,
            bins,
            step_scale: 0.2,
            horizon: 10,
            target: vec![0.5; dims],
            initial_state: None,
        }
    }

    #[test]
    fn three_bins_are_bang_off_bang() {
        assert_eq!((0..3).map(|b| level(b, 3)).collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn five_bins_equally_spaced() {
        assert_eq!((0..5).map(|b| level(b, 5)).collect::<Vec<_>>(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn zero_reward_at_target_with_off_action() {
        let c = config(3, 3);
        let (next, r, _) = point_mass_step(&[0.5; 3], 0, &GlobalAction::new(vec![1; 3]), &c).unwrap();
        assert_eq!(next, vec![0.5; 3]);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn even_bins_rejected() {
        assert!(config(2, 4).validate().is_err());
        assert!(config(2, 1).validate().is_err());
    }

    #[test]
    fn episode_ends_at_horizon() {
        let mut env = PointMass::new(config(2, 3), 1).unwrap();
        env.reset();
        let a = GlobalAction::new(vec![1, 1]);
        for t in 0..10 {
            assert_eq!(env.step(&a).unwrap().done, t == 9);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = |seed| {
            let mut env = PointMass::new(config(3, 3), seed).unwrap();
            let mut obs = vec![env.reset()];
            for t in 0..10 {
                let a = GlobalAction::new(vec![t % 3, (t + 1) % 3, 2]);
                obs.push(env.step(&a).unwrap().observation);
            }
            obs
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn oracle_moves_toward_target() {
        let env = PointMass::new(config(2, 3), 0).unwrap();
        assert_eq!(env.oracle_action(&[-1.0, 0.5]).0, vec![2, 1]);
        assert_eq!(env.oracle_action(&[1.0, 0.45]).0, vec![0, 1]);
    }

    proptest! {
        #[test]
        fn state_stays_in_box(actions in prop::collection::vec(prop::collection::vec(0usize..5, 3), 1..60), seed in any::<u64>()) {
            let mut c = config(3, 5);
            c.step_scale = 0.7;
            c.horizon = 100;
            let mut env = PointMass::new(c, seed).unwrap();
            env.reset();
            for a in actions {
                let s = env.step(&GlobalAction::new(a)).unwrap();
                prop_assert!(s.observation.iter().all(|x| (-1.0..=1.0).contains(x)));
                prop_assert!((-2.0..=0.0).contains(&s.reward));
            }
        }
    }
}
