use std::collections::VecDeque;

use crate::error::{domain, structural, Result};
use crate::fmdp::{GlobalAction, Transition};

/// One environment step before aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStep {
    pub state: Vec<f32>,
    pub action: GlobalAction,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub done: bool,
}

/// Turns a stream of raw steps into n-step transitions.
///
/// A transition starting at `t` carries `Σ_{j<m} γ^j r_{t+j}` and `s_{t+m}`
/// with `m = min(n, steps left in the episode)`. Nothing is emitted until the
/// window holds `n` steps or the episode ends, at which point the remainder
/// is flushed.
#[derive(Debug, Clone)]
pub struct NStepAssembler {
    horizon: usize,
    gamma: f32,
    window: VecDeque<RawStep>,
}

impl NStepAssembler {
    pub fn new(horizon: usize, gamma: f32) -> Result<Self> {
        if horizon == 0 {
            return Err(domain!("n-step horizon must be at least 1"));
        }
        Ok(Self { horizon, gamma, window: VecDeque::with_capacity(horizon) })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn pending(&self) -> usize {
        self.window.len()
    }

    /// Drops any partial window, e.g. when an episode is abandoned.
    pub fn clear(&mut self) {
        self.window.clear();
    }

    pub fn push(&mut self, step: RawStep) -> Result<Vec<Transition>> {
        if let Some(last) = self.window.back() {
            if last.next_state != step.state {
                return Err(structural!("step does not continue the current episode"));
            }
        }
        let done = step.done;
        self.window.push_back(step);
        let mut out = Vec::new();
        if done {
            while !self.window.is_empty() {
                out.push(self.aggregate());
                self.window.pop_front();
            }
        } else if self.window.len() == self.horizon {
            out.push(self.aggregate());
            self.window.pop_front();
        }
        Ok(out)
    }

    fn aggregate(&self) -> Transition {
        let first = self.window.front().expect("non-empty window");
        let last = self.window.back().expect("non-empty window");
        let mut reward = 0.0f32;
        let mut discount = 1.0f32;
        for s in &self.window {
            reward += discount * s.reward;
            discount *= self.gamma;
        }
        Transition {
            state: first.state.clone(),
            action: first.action.clone(),
            reward,
            next_state: last.next_state.clone(),
            done: last.done,
            n_used: self.window.len(),
        }
    }
}
