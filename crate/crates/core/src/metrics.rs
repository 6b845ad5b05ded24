//! Evaluation returns, gradient-norm detrending and the CVaR stability statistic.

use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{domain, structural, Result};
use crate::fmdp::GlobalAction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update_idx: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub update_idx: u64,
    pub eval_return: f64,
}

/// Everything logged during one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    pub config_hash: String,
    pub updates: Vec<UpdateRecord>,
    pub evals: Vec<EvalRecord>,
}

impl RunLog {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self { seed, config_hash: config_hash.into(), ..Default::default() }
    }

    pub fn push_update(&mut self, record: UpdateRecord) -> Result<()> {
        if let Some(last) = self.updates.last() {
            if record.update_idx <= last.update_idx {
                return Err(structural!("update index {} after {}", record.update_idx, last.update_idx));
            }
        }
        self.updates.push(record);
        Ok(())
    }

    pub fn push_eval(&mut self, record: EvalRecord) -> Result<()> {
        if let Some(last) = self.evals.last() {
            if record.update_idx <= last.update_idx {
                return Err(structural!("eval index {} after {}", record.update_idx, last.update_idx));
            }
        }
        self.evals.push(record);
        Ok(())
    }

    pub fn grad_norms(&self) -> Vec<f64> {
        self.updates.iter().map(|r| r.grad_norm).collect()
    }
}

/// Consecutive differences `g_{t+1} = x_{t+1} - x_t`.
pub fn detrend(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(domain!("detrending needs at least two values, got {}", values.len()));
    }
    Ok(values.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Nearest-rank percentile: the `⌈level · n⌉`-th smallest sample.
pub fn value_at_risk(samples: &[f64], level: f64) -> Result<f64> {
    let sorted = sorted_checked(samples, level)?;
    Ok(sorted[nearest_rank(sorted.len(), level)])
}

/// Mean of all samples at or above the nearest-rank `level` percentile.
pub fn cvar(samples: &[f64], level: f64) -> Result<f64> {
    let sorted = sorted_checked(samples, level)?;
    let var = sorted[nearest_rank(sorted.len(), level)];
    let tail: Vec<f64> = sorted.into_iter().filter(|&x| x >= var).collect();
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// CVaR over consecutive non-overlapping windows; a trailing partial window
/// is kept if non-empty. `window = None` uses the whole sequence.
pub fn cvar_windows(samples: &[f64], level: f64, window: Option<usize>) -> Result<Vec<f64>> {
    match window {
        None => Ok(vec![cvar(samples, level)?]),
        Some(0) => Err(domain!("CVaR window must be positive")),
        Some(w) => samples.chunks(w).map(|c| cvar(c, level)).collect(),
    }
}

/// Stability statistic for a run: CVaR of the detrended gradient norms.
pub fn grad_norm_cvar(grad_norms: &[f64], level: f64) -> Result<f64> {
    cvar(&detrend(grad_norms)?, level)
}

fn nearest_rank(n: usize, level: f64) -> usize {
    ((level * n as f64).ceil() as usize).clamp(1, n) - 1
}

fn sorted_checked(samples: &[f64], level: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(domain!("CVaR of an empty sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(domain!("CVaR level must lie in (0, 1), got {level}"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(domain!("NaN in CVaR sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    Ok(sorted)
}

/// Anything that can pick a greedy action from an observation.
pub trait GreedyPolicy {
    fn greedy_action(&self, observation: &[f32]) -> Result<GlobalAction>;
}

impl<F> GreedyPolicy for F
where
    F: Fn(&[f32]) -> Result<GlobalAction>,
{
    fn greedy_action(&self, observation: &[f32]) -> Result<GlobalAction> {
        self(observation)
    }
}

const MAX_EPISODE_STEPS: usize = 1_000_000;

/// Undiscounted return of each of `episodes` greedy episodes.
pub fn episode_returns<P, E>(policy: &P, env: &mut E, episodes: usize) -> Result<Vec<f64>>
where
    P: GreedyPolicy + ?Sized,
    E: Environment + ?Sized,
{
    if episodes == 0 {
        return Err(domain!("evaluation needs at least one episode"));
    }
    (0..episodes)
        .map(|_| {
            let mut obs = env.reset();
            let mut total = 0.0f64;
            for _ in 0..MAX_EPISODE_STEPS {
                let step = env.step(&policy.greedy_action(&obs)?)?;
                total += step.reward as f64;
                if step.done {
                    return Ok(total);
                }
                obs = step.observation;
            }
            Err(domain!("episode exceeded {MAX_EPISODE_STEPS} steps"))
        })
        .collect()
}

/// Mean undiscounted greedy return.
pub fn evaluate<P, E>(policy: &P, env: &mut E, episodes: usize) -> Result<f64>
where
    P: GreedyPolicy + ?Sized,
    E: Environment + ?Sized,
{
    let returns = episode_returns(policy, env, episodes)?;
    Ok(returns.iter().sum::<f64>() / returns.len() as f64)
}
