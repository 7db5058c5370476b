//! Tail functions used for p-values.

use statrs::function::gamma;

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Regularized upper incomplete gamma `Q(a, x)`, extended with `Q(a, 0) = 1`
/// and `Q(a, inf) = 0`.
pub fn igamc(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "igamc shape must be positive, got {a}");
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma::checked_gamma_ur(a, x).expect("arguments checked above")
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}
