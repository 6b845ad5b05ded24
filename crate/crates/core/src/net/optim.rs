use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};
use crate::net::{NetParams, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &NetParams<T>, config: AdamConfig) -> Self {
        Self { config, m: vec![T::zero(); params.len()], v: vec![T::zero(); params.len()], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam step. Non-finite gradients leave both the
    /// parameters and the optimiser state untouched.
    pub fn step(&mut self, params: &mut NetParams<T>, grads: &NetParams<T>) -> Result<()> {
        if !params.same_shape(grads) || self.m.len() != params.len() {
            return Err(structural!("gradient and optimiser shapes do not match the parameters"));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.t += 1;
        let c = &self.config;
        let f = T::from_f64_lossy;
        let (b1, b2) = (f(c.beta1), f(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let corr1 = T::one() - f(c.beta1.powi(self.t as i32));
        let corr2 = T::one() - f(c.beta2.powi(self.t as i32));
        let (lr, eps) = (f(c.lr), f(c.eps));
        for (((p, &g), m), v) in params
            .as_mut_slice()
            .iter_mut()
            .zip(grads.as_slice())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Rescales `grads` in place so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut NetParams<T>, max_norm: T) -> T {
    let norm = grads.as_slice().iter().fold(T::zero(), |acc, &g| acc + g * g).sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.as_mut_slice().iter_mut().for_each(|g| *g = *g * scale);
    }
    norm
}

/// `target ← c · online + (1 − c) · target`, elementwise.
pub fn polyak_update<T: Real>(target: &mut NetParams<T>, online: &NetParams<T>, c: T) -> Result<()> {
    if !target.same_shape(online) {
        return Err(structural!("target and online networks differ in shape"));
    }
    let keep = T::one() - c;
    for (t, &o) in target.as_mut_slice().iter_mut().zip(online.as_slice()) {
        *t = c * o + keep * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmdp::ActionSpaceSpec;
    use crate::net::NetConfig;

    fn scalar_net(value: f64) -> NetParams<f64> {
        // Smallest layout; the tests only use the flat buffer.
        let cfg = NetConfig::new(1, ActionSpaceSpec::new(vec![2]).unwrap(), 0).with_hidden(1);
        let mut p = NetParams::init(&cfg).unwrap();
        p.as_mut_slice().fill(value);
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_net(0.0);
        let mut g = p.zeros_like();
        g.as_mut_slice().fill(-3.7);
        let mut adam = AdamState::new(&p, AdamConfig { lr: 0.1, ..Default::default() });
        adam.step(&mut p, &g).unwrap();
        for &x in p.as_slice() {
            assert!((x - 0.1).abs() < 1e-6);
        }
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn two_steps_match_hand_recursion() {
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let (g1, g2) = (0.5, -2.0);
        let mut p = scalar_net(1.0);
        let mut adam = AdamState::new(&p, AdamConfig { lr, beta1: b1, beta2: b2, eps });
        for g in [g1, g2] {
            let mut grads = p.zeros_like();
            grads.as_mut_slice().fill(g);
            adam.step(&mut p, &grads).unwrap();
        }
        // Hand-evaluated recursion.
        let m1 = (1.0 - b1) * g1;
        let v1 = (1.0 - b2) * g1 * g1;
        let x1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g2;
        let v2 = b2 * v1 + (1.0 - b2) * g2 * g2;
        let x2 = x1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((p.as_slice()[0] - x2).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_never_move() {
        let mut p = scalar_net(0.25);
        let g = p.zeros_like();
        let mut adam = AdamState::new(&p, AdamConfig::default());
        for _ in 0..100 {
            adam.step(&mut p, &g).unwrap();
        }
        assert!(p.as_slice().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = scalar_net(0.25);
        let mut g = p.zeros_like();
        g.as_mut_slice()[0] = f64::NAN;
        let mut adam = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(adam.step(&mut p, &g), Err(Error::NonFinite(_))));
        assert!(p.as_slice().iter().all(|&x| x == 0.25));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn clipping() {
        let mut g = scalar_net(0.0);
        g.as_mut_slice()[0] = 30.0;
        g.as_mut_slice()[1] = 40.0;
        assert_eq!(clip_grad_norm(&mut g, 40.0), 50.0);
        assert!((g.as_slice()[0] - 24.0).abs() < 1e-12 && (g.as_slice()[1] - 32.0).abs() < 1e-12);

        let mut small = scalar_net(0.0);
        small.as_mut_slice()[0] = 20.0;
        let before = small.clone();
        clip_grad_norm(&mut small, 40.0);
        assert_eq!(small, before);
    }

    #[test]
    fn polyak_single_step_and_hard_copy() {
        let online = scalar_net(1.0);
        let mut target = scalar_net(0.0);
        polyak_update(&mut target, &online, 0.005).unwrap();
        assert!(target.as_slice().iter().all(|&x| x == 0.005));
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, online);
    }

    #[test]
    fn polyak_geometric_convergence() {
        let c = 0.005;
        let online = scalar_net(1.0);
        let mut target = scalar_net(-1.0);
        let mut gap = 2.0f64;
        for _ in 0..500 {
            polyak_update(&mut target, &online, c).unwrap();
            gap *= 1.0 - c;
            assert!(((1.0 - target.as_slice()[0]) - gap).abs() < 1e-12);
        }
    }

    #[test]
    fn polyak_shape_mismatch() {
        let cfg = NetConfig::new(2, ActionSpaceSpec::new(vec![2]).unwrap(), 0).with_hidden(1);
        let other = NetParams::<f64>::init(&cfg).unwrap();
        assert!(polyak_update(&mut scalar_net(0.0), &other, 0.1).is_err());
    }
}
