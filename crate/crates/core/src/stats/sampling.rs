use alloc::vec::Vec;

use crate::math::{exp, ln, sqrt};
use crate::rng::Stream;
use crate::simplex::SimplexPoint;

/// Logarithm of a `Gamma(shape, 1)` draw.
///
/// Marsaglia-Tsang for `shape ≥ 1`; smaller shapes use
/// `G(shape) = G(shape + 1) · U^{1/shape}`, evaluated in log space so that
/// tiny shapes do not underflow to zero.
pub fn ln_gamma_variate(shape: f64, stream: &mut Stream) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let boosted = ln_gamma_variate(shape + 1.0, stream);
        return boosted + ln(stream.uniform_open()) / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / sqrt(9.0 * d);
    loop {
        let x = stream.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = stream.uniform_open();
        if ln(u) < 0.5 * x * x + d - d * v + d * ln(v) {
            return ln(d) + ln(v);
        }
    }
}

/// A `Gamma(shape, 1)` draw.
pub fn sample_gamma(shape: f64, stream: &mut Stream) -> f64 {
    exp(ln_gamma_variate(shape, stream))
}

/// A `Beta(a, b)` draw as `G_a / (G_a + G_b)`.
pub fn sample_beta(a: f64, b: f64, stream: &mut Stream) -> f64 {
    let la = ln_gamma_variate(a, stream);
    let lb = ln_gamma_variate(b, stream);
    1.0 / (1.0 + exp(lb - la))
}

/// A `Dirichlet(α)` draw: independent Gammas normalized by their sum.
pub fn sample_dirichlet(alpha: &[f64], stream: &mut Stream) -> SimplexPoint {
    let logs: Vec<f64> = alpha.iter().map(|&a| ln_gamma_variate(a, stream)).collect();
    SimplexPoint::from_raw(normalize_logs(&logs))
}

/// `exp(lᵢ) / Σⱼ exp(lⱼ)` without overflow.
pub(crate) fn normalize_logs(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| exp(l - max)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}
