use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Error, Result};
use crate::fmdp::Transition;
use crate::replay::SumTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub batch_size: usize,
    /// Priority exponent.
    pub alpha: f64,
    /// Importance-sampling exponent, held fixed.
    pub beta: f64,
    /// Added to `|td error|` so no priority is ever zero.
    pub priority_floor: f64,
    pub n_step: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { capacity: 500_000, batch_size: 256, alpha: 0.6, beta: 0.2, priority_floor: 1e-6, n_step: 3 }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.batch_size == 0 || self.n_step == 0 {
            return Err(domain!("replay capacity, batch_size and n_step must be positive"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.priority_floor > 0.0) {
            return Err(domain!("replay alpha and beta must be non-negative and priority_floor positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub transitions: Vec<Transition>,
    /// Importance-sampling weights, normalised so the largest is 1.
    pub weights: Vec<f32>,
}

/// Proportional prioritized replay with FIFO eviction.
///
/// Slot `i` is drawn with probability `p_i^α / Σ_j p_j^α`. New transitions
/// enter with the largest priority currently stored (1 for an empty buffer).
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    config: ReplayConfig,
    storage: Vec<Transition>,
    next: usize,
    tree: SumTree,
}

impl PrioritizedBuffer {
    pub fn new(config: ReplayConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            storage: Vec::with_capacity(config.capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(config.capacity),
            config,
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.storage.get(index)
    }

    /// Raw (un-exponentiated) priority of a slot.
    pub fn priority(&self, index: usize) -> f64 {
        self.tree.get(index).powf(1.0 / self.config.alpha)
    }

    /// `Σ p_i^α` as maintained by the tree.
    pub fn total_mass(&self) -> f64 {
        self.tree.total()
    }

    /// `Σ p_i^α` recomputed from the leaves.
    pub fn leaf_mass(&self) -> f64 {
        self.tree.leaf_sum()
    }

    /// Closed-form sampling probability of a slot.
    pub fn probability(&self, index: usize) -> f64 {
        self.tree.get(index) / self.tree.total()
    }

    pub fn push(&mut self, transition: Transition) {
        let priority = if self.is_empty() { 1.0 } else { self.tree.max() };
        let slot = self.next;
        if self.storage.len() < self.config.capacity {
            self.storage.push(transition);
        } else {
            self.storage[slot] = transition;
        }
        self.set_priority(slot, priority);
        self.next = (self.next + 1) % self.config.capacity;
    }

    fn set_priority(&mut self, slot: usize, priority: f64) {
        self.tree.set(slot, priority.powf(self.config.alpha), priority);
    }

    /// Draws `batch_size` slots independently, proportional to priority.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampledBatch> {
        if self.is_empty() {
            return Err(Error::State("cannot sample from an empty replay buffer".into()));
        }
        let total = self.tree.total();
        let size = self.len() as f64;
        let indices: Vec<usize> = (0..batch_size)
            .map(|_| self.tree.find(rng.random::<f64>() * total).min(self.len() - 1))
            .collect();
        let raw: Vec<f64> = indices
            .iter()
            .map(|&i| (size * self.tree.get(i) / total).powf(-self.config.beta))
            .collect();
        let max_w = raw.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        let weights = raw.iter().map(|w| (w / max_w) as f32).collect();
        let transitions = indices.iter().map(|&i| self.storage[i].clone()).collect();
        Ok(SampledBatch { indices, transitions, weights })
    }

    /// `p_i ← |δ_i| + floor` for each sampled slot.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f32]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(structural!("{} indices but {} td errors", indices.len(), td_errors.len()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(structural!("replay index {bad} out of range 0..{}", self.len()));
        }
        for (&i, &td) in indices.iter().zip(td_errors) {
            let p = (td.abs() as f64) + self.config.priority_floor;
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("td error for replay slot {i}")));
            }
            self.set_priority(i, p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmdp::GlobalAction;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(tag: f32) -> Transition {
        Transition {
            state: vec![tag],
            action: GlobalAction::new(vec![0]),
            reward: 0.0,
            next_state: vec![tag + 1.0],
            done: false,
            n_used: 1,
        }
    }

    fn buffer(capacity: usize) -> PrioritizedBuffer {
        PrioritizedBuffer::new(ReplayConfig { capacity, ..Default::default() }).unwrap()
    }

    #[test]
    fn empty_buffer_cannot_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buffer(4).sample(2, &mut rng), Err(Error::State(_))));
    }

    #[test]
    fn zero_td_error_keeps_floor() {
        let mut b = buffer(4);
        b.push(transition(0.0));
        b.update_priorities(&[0], &[0.0]).unwrap();
        assert!((b.priority(0) - 1e-6).abs() < 1e-15);
        assert!(b.total_mass() > 0.0);
    }

    #[test]
    fn new_entries_get_current_max() {
        let mut b = buffer(8);
        b.push(transition(0.0));
        b.push(transition(1.0));
        b.update_priorities(&[0, 1], &[4.0, 0.5]).unwrap();
        b.push(transition(2.0));
        assert!((b.priority(2) - (4.0 + 1e-6)).abs() < 1e-9);
    }

    #[test]
    fn fifo_eviction() {
        let mut b = buffer(3);
        for t in 0..5 {
            b.push(transition(t as f32));
        }
        assert_eq!(b.len(), 3);
        let tags: Vec<f32> = (0..3).map(|i| b.get(i).unwrap().state[0]).collect();
        assert_eq!(tags, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn out_of_range_update_is_structural() {
        let mut b = buffer(4);
        b.push(transition(0.0));
        assert!(matches!(b.update_priorities(&[1], &[0.3]), Err(Error::Structural(_))));
    }

    #[test]
    fn degenerate_priorities_always_pick_the_heavy_slot() {
        let mut b = buffer(2);
        b.push(transition(0.0));
        b.push(transition(1.0));
        b.update_priorities(&[0, 1], &[1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = b.sample(10_000, &mut rng).unwrap();
        let zeros = batch.indices.iter().filter(|&&i| i == 0).count();
        // The floor leaves slot 1 with mass (1e-6)^0.6 ≈ 2.5e-4 relative.
        assert!(zeros as f64 / 10_000.0 > 0.99);
    }

    #[test]
    fn uniform_priorities_give_unit_weights() {
        let mut b = buffer(16);
        for t in 0..10 {
            b.push(transition(t as f32));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = b.sample(64, &mut rng).unwrap();
        assert!(batch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn two_slot_frequency_matches_closed_form() {
        let mut b = buffer(2);
        b.push(transition(0.0));
        b.push(transition(1.0));
        b.update_priorities(&[0, 1], &[1.0 - 1e-6, 2.0 - 1e-6]).unwrap();
        let p1 = 2f64.powf(0.6) / (1.0 + 2f64.powf(0.6));
        assert!((p1 - 0.6025).abs() < 1e-4);
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = b.sample(draws, &mut rng).unwrap();
        let freq = batch.indices.iter().filter(|&&i| i == 1).count() as f64 / draws as f64;
        let sigma = (p1 * (1.0 - p1) / draws as f64).sqrt();
        assert!((freq - p1).abs() < 3.0 * sigma, "freq {freq} vs {p1}");
    }

    #[test]
    fn importance_weights_follow_formula() {
        let mut b = buffer(4);
        for t in 0..3 {
            b.push(transition(t as f32));
        }
        b.update_priorities(&[0, 1, 2], &[0.5, 1.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = b.sample(200, &mut rng).unwrap();
        let raw = |i: usize| (3.0 * b.probability(i)).powf(-0.2);
        let max = batch.indices.iter().map(|&i| raw(i)).fold(0.0, f64::max);
        for (&i, &w) in batch.indices.iter().zip(&batch.weights) {
            assert!((w as f64 - raw(i) / max).abs() < 1e-6);
        }
    }

    #[test]
    fn chi_square_sampling_test() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut b = buffer(10);
        for t in 0..10 {
            b.push(transition(t as f32));
        }
        let tds: Vec<f32> = (0..10).map(|i| 0.1 + 0.37 * i as f32).collect();
        b.update_priorities(&(0..10).collect::<Vec<_>>(), &tds).unwrap();
        let draws = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let batch = b.sample(draws, &mut rng).unwrap();
        let mut counts = [0usize; 10];
        batch.indices.iter().for_each(|&i| counts[i] += 1);
        let stat: f64 = (0..10)
            .map(|i| {
                let expected = draws as f64 * b.probability(i);
                (counts[i] as f64 - expected).powi(2) / expected
            })
            .sum();
        let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(stat);
        assert!(p > 0.001, "chi-square {stat}, p = {p}");
    }

    proptest! {
        #[test]
        fn root_tracks_leaves(ops in prop::collection::vec((any::<bool>(), 0usize..64, 0.0f32..20.0), 1..400)) {
            let mut b = buffer(32);
            b.push(transition(0.0));
            for (insert, idx, td) in ops {
                if insert {
                    b.push(transition(td));
                } else {
                    let i = idx % b.len();
                    b.update_priorities(&[i], &[td]).unwrap();
                }
                let exact = b.leaf_mass();
                prop_assert!((b.total_mass() - exact).abs() <= 1e-6 * exact);
            }
        }
    }
}
