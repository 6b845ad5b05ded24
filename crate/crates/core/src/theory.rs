//! Bias and variance of the bootstrap target under uniform approximation noise.
//!
//! Every estimate is modelled as `true value + ε` with `ε ~ Uniform(-b, b)`
//! i.i.d. across (sub-)actions and critics. The target difference `Z` is the
//! gap between the noisy and the true bootstrap target; its mean is the
//! overestimation bias and its variance the target variance. Closed forms
//! follow from the moments of the maximum of i.i.d. uniforms, and the Monte
//! Carlo simulators sample the same quantities directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::fmdp::ActionSpaceSpec;

/// Smallest Monte Carlo run accepted by [`simulate_target_diff`].
pub const MIN_TRIALS: usize = 1_000;

/// Trials per independently seeded generator. Fixed so that results do not
/// depend on how blocks are scheduled across threads.
const BLOCK: usize = 1 << 13;

/// Uniform noise half-width and discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub b: f64,
    pub gamma: f64,
}

impl NoiseModel {
    pub fn new(b: f64, gamma: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(domain!("noise half-width b must be positive, got {b}"));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(domain!("discount gamma must lie in (0, 1], got {gamma}"));
        }
        Ok(Self { b, gamma })
    }
}

/// Which target the difference is taken for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// No decomposition: max over all `∏ n_i` atomic actions.
    Dqn,
    /// Mean of per-dimension maxima.
    Dec,
    /// Ensemble of `K` critics, each critic's per-dimension maximum averaged
    /// over the ensemble. This is the quantity whose moments are `dec` mean
    /// and `dec` variance over `K`.
    Ens,
    /// Sum of per-dimension maxima.
    Sum,
    /// Per-dimension maximum of the across-critic mean utility, i.e. the
    /// quantity actually bootstrapped by the ensemble target. No closed form;
    /// its mean is at most the `dec` mean.
    EnsTarget,
}

impl TargetMode {
    pub const CLOSED_FORM: [TargetMode; 4] = [TargetMode::Dqn, TargetMode::Dec, TargetMode::Ens, TargetMode::Sum];

    pub fn name(self) -> &'static str {
        match self {
            TargetMode::Dqn => "dqn",
            TargetMode::Dec => "dec",
            TargetMode::Ens => "ens",
            TargetMode::Sum => "sum",
            TargetMode::EnsTarget => "ens_target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of the maximum of `n` i.i.d. `Uniform(-b, b)` variables.
pub fn max_uniform_moments(n: usize, b: f64) -> Result<Moments> {
    if n < 1 {
        return Err(domain!("need at least one variable, got n = {n}"));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(domain!("half-width b must be positive, got {b}"));
    }
    let n = n as f64;
    Ok(Moments {
        mean: b * (n - 1.0) / (n + 1.0),
        variance: 4.0 * b * b * n / ((n + 1.0).powi(2) * (n + 2.0)),
    })
}

/// Same as [`max_uniform_moments`] but for a real-valued count, used when
/// `∏ n_i` does not fit an integer comfortably.
fn max_uniform_moments_real(n: f64, b: f64) -> Moments {
    Moments {
        mean: b * (n - 1.0) / (n + 1.0),
        variance: 4.0 * b * b * n / ((n + 1.0).powi(2) * (n + 2.0)),
    }
}

/// Closed-form moments of the target difference.
pub fn closed_form_target_moments(
    spec: &ActionSpaceSpec,
    noise: NoiseModel,
    mode: TargetMode,
    k: usize,
) -> Result<Moments> {
    if k < 1 {
        return Err(domain!("ensemble size must be at least 1"));
    }
    let NoiseModel { b, gamma } = noise;
    let dims = spec.num_dims() as f64;
    let dec = || {
        let (mut m, mut v) = (0.0, 0.0);
        for &n in spec.sizes() {
            let mm = max_uniform_moments_real(n as f64, b);
            m += mm.mean;
            v += mm.variance;
        }
        Moments { mean: gamma * m / dims, variance: gamma * gamma * v / (dims * dims) }
    };
    Ok(match mode {
        TargetMode::Dqn => {
            let mm = max_uniform_moments_real(spec.num_atomic_actions(), b);
            Moments { mean: gamma * mm.mean, variance: gamma * gamma * mm.variance }
        }
        TargetMode::Dec => dec(),
        TargetMode::Ens => {
            let d = dec();
            Moments { mean: d.mean, variance: d.variance / k as f64 }
        }
        TargetMode::Sum => {
            let d = dec();
            Moments { mean: dims * d.mean, variance: dims * dims * d.variance }
        }
        TargetMode::EnsTarget => {
            return Err(domain!("no closed form for the ensemble-mean target difference"));
        }
    })
}

/// Streaming mean/variance accumulator (Welford), mergeable across blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleStats {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl SampleStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &SampleStats) -> SampleStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let (na, nb, n) = (self.count as f64, other.count as f64, count as f64);
        let delta = other.mean - self.mean;
        SampleStats {
            count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Runs `trials` independent draws in fixed-size blocks, one seeded stream per
/// block, and merges the block statistics in block order.
pub fn monte_carlo<F>(trials: usize, seed: u64, draw: F) -> SampleStats
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let blocks = trials.div_ceil(BLOCK);
    let parts: Vec<SampleStats> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let len = BLOCK.min(trials - block * BLOCK);
            let mut stats = SampleStats::default();
            for _ in 0..len {
                stats.push(draw(&mut rng));
            }
            stats
        })
        .collect();
    parts.iter().fold(SampleStats::default(), |acc, s| acc.merge(s))
}

fn max_of_uniforms<R: Rng>(rng: &mut R, n: usize, b: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n {
        best = best.max(rng.random_range(-b..b));
    }
    best
}

/// Monte Carlo estimate of the moments of the maximum of `n` uniforms.
pub fn simulate_max_uniform(n: usize, b: f64, trials: usize, seed: u64) -> Result<SampleStats> {
    max_uniform_moments(n, b)?;
    if trials < 2 {
        return Err(domain!("need at least two trials"));
    }
    Ok(monte_carlo(trials, seed, |rng| max_of_uniforms(rng, n, b)))
}

/// Result of a target-difference simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDiffStats {
    pub mode: TargetMode,
    pub mean: f64,
    pub variance: f64,
    pub trials: usize,
    pub std_error_mean: f64,
}

/// Samples `Z` with all true utilities set to zero, so the true-value maxima
/// vanish and only the noise terms remain.
pub fn simulate_target_diff(
    spec: &ActionSpaceSpec,
    noise: NoiseModel,
    mode: TargetMode,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<TargetDiffStats> {
    if trials < MIN_TRIALS {
        return Err(domain!("need at least {MIN_TRIALS} trials, got {trials}"));
    }
    if k < 1 {
        return Err(domain!("ensemble size must be at least 1"));
    }
    let NoiseModel { b, gamma } = noise;
    let sizes = spec.sizes();
    let dims = sizes.len() as f64;
    let atomic = spec.num_atomic_actions();
    if mode == TargetMode::Dqn && atomic > 1e8 {
        return Err(domain!("{atomic} atomic actions is too many to simulate"));
    }
    let per_dim_max_sum = |rng: &mut ChaCha8Rng| sizes.iter().map(|&n| max_of_uniforms(rng, n, b)).sum::<f64>();
    let stats = match mode {
        TargetMode::Dqn => monte_carlo(trials, seed, |rng| gamma * max_of_uniforms(rng, atomic as usize, b)),
        TargetMode::Dec => monte_carlo(trials, seed, |rng| gamma * per_dim_max_sum(rng) / dims),
        TargetMode::Sum => monte_carlo(trials, seed, |rng| gamma * per_dim_max_sum(rng)),
        TargetMode::Ens => monte_carlo(trials, seed, |rng| {
            let total: f64 = (0..k).map(|_| per_dim_max_sum(rng)).sum();
            gamma * total / (k as f64 * dims)
        }),
        TargetMode::EnsTarget => {
            let widest = sizes.iter().copied().max().unwrap_or(0);
            monte_carlo(trials, seed, |rng| {
                let mut mean_util = vec![0.0; widest];
                let mut total = 0.0;
                for &n in sizes {
                    mean_util[..n].iter_mut().for_each(|u| *u = 0.0);
                    for _ in 0..k {
                        for u in &mut mean_util[..n] {
                            *u += rng.random_range(-b..b);
                        }
                    }
                    total += mean_util[..n].iter().fold(f64::NEG_INFINITY, |m, &u| m.max(u)) / k as f64;
                }
                gamma * total / dims
            })
        }
    };
    Ok(TargetDiffStats {
        mode,
        mean: stats.mean,
        variance: stats.variance(),
        trials: stats.count,
        std_error_mean: stats.std_error(),
    })
}

/// One inequality or identity between closed-form quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs` for inequalities, `|rhs - lhs|` for identities.
    pub margin: f64,
    pub relative_margin: f64,
    pub holds: bool,
}

/// Relative slack allowed when comparing closed forms that are equal in
/// exact arithmetic (N = 1 collapses, the ensemble identities).
const CLOSED_FORM_RTOL: f64 = 1e-12;

fn less_eq(label: &'static str, lhs: f64, rhs: f64) -> Comparison {
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    let margin = rhs - lhs;
    Comparison {
        label,
        lhs,
        rhs,
        margin,
        relative_margin: margin / scale,
        holds: margin >= -CLOSED_FORM_RTOL * scale,
    }
}

fn equal(label: &'static str, lhs: f64, rhs: f64) -> Comparison {
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    let margin = (rhs - lhs).abs();
    Comparison {
        label,
        lhs,
        rhs,
        margin,
        relative_margin: margin / scale,
        holds: margin <= CLOSED_FORM_RTOL * scale,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub spec: ActionSpaceSpec,
    pub k: usize,
    pub comparisons: Vec<Comparison>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.holds)
    }
}

/// Checks the bias/variance orderings between the decompositions and the
/// ensemble identities for every spec in `grid`.
pub fn verify_inequalities(grid: &[ActionSpaceSpec], noise: NoiseModel, k: usize) -> Result<Vec<InequalityReport>> {
    grid.iter()
        .map(|spec| {
            let m = |mode| closed_form_target_moments(spec, noise, mode, k);
            let (dqn, dec, ens, sum) = (m(TargetMode::Dqn)?, m(TargetMode::Dec)?, m(TargetMode::Ens)?, m(TargetMode::Sum)?);
            let comparisons = vec![
                less_eq("mean_dec<=mean_dqn", dec.mean, dqn.mean),
                less_eq("mean_dqn<=mean_sum", dqn.mean, sum.mean),
                less_eq("var_dqn<=var_dec", dqn.variance, dec.variance),
                less_eq("var_dec<=var_sum", dec.variance, sum.variance),
                less_eq("var_dqn<=var_sum", dqn.variance, sum.variance),
                equal("mean_ens==mean_dec", ens.mean, dec.mean),
                equal("var_ens==var_dec/K", ens.variance, dec.variance / k as f64),
            ];
            Ok(InequalityReport { spec: spec.clone(), k, comparisons })
        })
        .collect()
}

/// Every multiset of sizes with `dims` in `dim_range` and each size in
/// `size_range`. Order is irrelevant to the closed forms, so sizes are kept
/// non-decreasing; this covers all-equal and mixed specs.
pub fn spec_grid(dim_range: std::ops::RangeInclusive<usize>, size_range: std::ops::RangeInclusive<usize>) -> Result<Vec<ActionSpaceSpec>> {
    fn extend(prefix: &mut Vec<usize>, dims: usize, lo: usize, hi: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dims {
            out.push(prefix.clone());
            return;
        }
        let start = prefix.last().copied().unwrap_or(lo);
        for n in start..=hi {
            prefix.push(n);
            extend(prefix, dims, lo, hi, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    for dims in dim_range {
        extend(&mut Vec::new(), dims, *size_range.start(), *size_range.end(), &mut raw);
    }
    raw.into_iter().map(ActionSpaceSpec::new).collect()
}
