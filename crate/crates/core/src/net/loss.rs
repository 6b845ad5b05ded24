use num_traits::Float;

/// Huber loss and its derivative at `x`.
///
/// Quadratic within `kappa` of zero, linear outside.
pub fn huber<T: Float>(x: T, kappa: T) -> (T, T) {
    let half = T::from(0.5).unwrap();
    if x.abs() <= kappa {
        (half * x * x, x)
    } else {
        (kappa * (x.abs() - half * kappa), kappa * x.signum())
    }
}
