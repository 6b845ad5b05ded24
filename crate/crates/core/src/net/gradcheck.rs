//! Central finite-difference check of [`NetParams::backward`] in f64.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fmdp::ActionSpaceSpec;
use crate::net::{NetConfig, NetParams};

/// Settings of a gradient check run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub draws: usize,
    pub step: f64,
    /// Lower bound on the denominator of the relative error, so that
    /// gradients which are zero up to rounding do not divide by zero.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { draws: 100, step: 1e-5, denominator_floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub draws: usize,
    pub parameters_checked: usize,
    pub max_relative_error: f64,
    /// Segment name and index of the worst coordinate.
    pub worst: (String, usize),
}

/// Compares analytic gradients with `(L(θ + h) - L(θ - h)) / 2h`, one
/// coordinate at a time, for random shapes, parameters and inputs.
///
/// The scalar loss is `Σ C ⊙ outputs` for a random coefficient matrix `C`,
/// so `C` is the upstream gradient handed to `backward`. Biases and the
/// layer-norm affine parameters are randomised too, so no coordinate is
/// checked at a special value.
pub fn gradient_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = GradCheckReport {
        draws: config.draws,
        parameters_checked: 0,
        max_relative_error: 0.0,
        worst: (String::new(), 0),
    };
    for _ in 0..config.draws {
        let dims = rng.random_range(1..=3);
        let spec = ActionSpaceSpec::new((0..dims).map(|_| rng.random_range(2..=4)).collect())?;
        let input_dim = rng.random_range(1..=4);
        let hidden = rng.random_range(3..=8);
        let net = NetConfig::new(input_dim, spec, rng.random()).with_hidden(hidden);
        let mut params = NetParams::<f64>::init(&net)?;
        for x in params.as_mut_slice() {
            *x += rng.random_range(-0.3..0.3);
        }
        let rows = rng.random_range(1..=3);
        let states = Array2::from_shape_fn((rows, input_dim), |_| rng.random_range(-1.0..1.0));
        let outputs = params.layout().outputs();
        let coeffs = Array2::from_shape_fn((rows, outputs), |_| rng.random_range(-1.0..1.0));

        let loss = |p: &NetParams<f64>| -> Result<f64> {
            Ok((&p.forward_batch(states.view())?.outputs * &coeffs).sum())
        };
        let cache = params.forward_batch(states.view())?;
        let analytic = params.backward(&cache, coeffs.view())?;

        let segments = params.layout().segments.clone();
        for seg in &segments {
            for j in 0..seg.len() {
                let idx = seg.offset + j;
                let original = params.as_slice()[idx];
                params.as_mut_slice()[idx] = original + config.step;
                let plus = loss(&params)?;
                params.as_mut_slice()[idx] = original - config.step;
                let minus = loss(&params)?;
                params.as_mut_slice()[idx] = original;

                let numeric = (plus - minus) / (2.0 * config.step);
                let a = analytic.as_slice()[idx];
                let denom = a.abs().max(numeric.abs()).max(config.denominator_floor);
                let err = (a - numeric).abs() / denom;
                if err > report.max_relative_error {
                    report.max_relative_error = err;
                    report.worst = (seg.name.to_string(), j);
                }
                report.parameters_checked += 1;
            }
        }
    }
    Ok(report)
}
