use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::neural::epsilon_greedy;
use crate::agents::WeightFn;
use crate::envs::{tabular_credit_step, TabularCreditConfig};
use crate::error::{domain, structural, Result};
use crate::fmdp::{argmax, ActionSpaceSpec, GlobalAction};

/// Learning constants of the tabular agent. `beta = 0` is tabular DecQN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Polyak coefficient of the lagged table.
    pub polyak: f64,
    pub epsilon: f64,
    pub weight_fn: WeightFn,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.5, polyak: 0.05, epsilon: 0.1, weight_fn: WeightFn::Exponential }
    }
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(domain!("tabular.alpha must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(domain!("tabular.beta must be non-negative"));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(domain!("tabular.polyak must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(domain!("tabular.epsilon must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Utility table `U[i][a_i]` of a single-state problem and its lagged copy.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularUtilities {
    pub values: Vec<Vec<f64>>,
    pub lagged: Vec<Vec<f64>>,
}

impl TabularUtilities {
    /// The lagged copy starts equal to `values`.
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        Self { lagged: values.clone(), values }
    }

    pub fn zeros(spec: &ActionSpaceSpec) -> Self {
        Self::new(spec.sizes().iter().map(|&n| vec![0.0; n]).collect())
    }

    pub fn greedy(&self) -> GlobalAction {
        GlobalAction::new(self.values.iter().map(|u| argmax(u).expect("non-empty row")).collect())
    }
}

/// One update on a terminal transition with reward `reward`.
///
/// With `δ = r - (1/N) Σ_i U[i][a_i]` every taken utility moves by
/// `α δ / N - α β w_i (U[i][a_i] - Ū[i][a_i])`, with `w_i` evaluated at
/// `r - U[i][a_i]` before the update. The lagged table then follows by
/// Polyak averaging.
pub fn tabular_update(tab: &mut TabularUtilities, action: &GlobalAction, reward: f64, config: &TabularConfig) -> Result<()> {
    let dims = tab.values.len();
    if action.len() != dims {
        return Err(structural!("{}-dimensional action for a {dims}-dimensional table", action.len()));
    }
    for (i, (&a, row)) in action.iter().zip(&tab.values).enumerate() {
        if a >= row.len() {
            return Err(structural!("sub-action {a} out of range 0..{} in dimension {i}", row.len()));
        }
    }
    let n = dims as f64;
    let q: f64 = action.iter().zip(&tab.values).map(|(&a, row)| row[a]).sum::<f64>() / n;
    let delta = reward - q;
    for (i, &a) in action.iter().enumerate() {
        let u = tab.values[i][a];
        let gap = u - tab.lagged[i][a];
        let w = config.weight_fn.weight(reward - u);
        tab.values[i][a] = u + config.alpha * delta / n - config.alpha * config.beta * w * gap;
    }
    let c = config.polyak;
    for (lag, val) in tab.lagged.iter_mut().zip(&tab.values) {
        for (l, &v) in lag.iter_mut().zip(val) {
            *l = c * v + (1.0 - c) * *l;
        }
    }
    Ok(())
}

/// Shape and seed of the credit-assignment experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreditExperimentConfig {
    pub dims: usize,
    pub n: usize,
    pub trials: usize,
    pub updates: usize,
    pub seed: u64,
}

impl Default for CreditExperimentConfig {
    fn default() -> Self {
        Self { dims: 5, n: 10, trials: 1000, updates: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreditPoint {
    pub update_idx: usize,
    /// Fraction of trials whose greedy sub-action in the last dimension is optimal.
    pub frequency: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditCurve {
    pub points: Vec<CreditPoint>,
}

const INIT_HALF_WIDTH: f64 = 0.1;

/// Runs independent trials of the credit-assignment task.
///
/// Each trial draws a fresh table with utilities uniform in
/// `(-0.1, 0.1)` except the optimal sub-action of the last dimension, which
/// starts at `+1`. Every update takes one ε-greedy action, observes its
/// reward and applies [`tabular_update`]. Trial `t` draws from stream `t` of
/// the seeded generator, so two configurations run with the same seed see
/// identical initial tables and exploration draws.
pub fn run_credit_experiment(config: &CreditExperimentConfig, tab_config: &TabularConfig) -> Result<CreditCurve> {
    tab_config.validate()?;
    if config.trials < 2 || config.updates == 0 {
        return Err(domain!("credit experiment needs at least 2 trials and 1 update"));
    }
    let env = TabularCreditConfig::new(config.dims, config.n);
    let spec = env.validate()?;
    let last = config.dims - 1;
    let optimal_last = env.optimal[last];

    let hits: Vec<Vec<bool>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(trial as u64);
            let mut values: Vec<Vec<f64>> = spec
                .sizes()
                .iter()
                .map(|&n| (0..n).map(|_| rng.random_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH)).collect())
                .collect();
            values[last][optimal_last] = 1.0;
            let mut tab = TabularUtilities::new(values);
            (0..config.updates)
                .map(|_| {
                    let action = epsilon_greedy(&tab.values, tab_config.epsilon, &mut rng);
                    let (reward, _) = tabular_credit_step(&env, &action)?;
                    tabular_update(&mut tab, &action, reward as f64, tab_config)?;
                    Ok(argmax(&tab.values[last]) == Some(optimal_last))
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;

    let trials = config.trials as f64;
    let points = (0..config.updates)
        .map(|u| {
            let count = hits.iter().filter(|h| h[u]).count() as f64;
            let p = count / trials;
            // Unbiased sample variance of a 0/1 indicator.
            let var = (count - trials * p * p) / (trials - 1.0);
            CreditPoint { update_idx: u + 1, frequency: p, ci_half_width: 1.96 * (var.max(0.0) / trials).sqrt() }
        })
        .collect();
    Ok(CreditCurve { points })
}
