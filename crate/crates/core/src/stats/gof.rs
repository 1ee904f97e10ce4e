//! Anderson-Darling and the L² statistic `T_n` for a fully specified Beta
//! null, both calibrated by Monte-Carlo null replications.

use alloc::format;
use alloc::vec::Vec;

use super::sampling::sample_beta;
use super::special::{ln_beta, reg_inc_beta};
use crate::math::{exp, ln};
use crate::par::map_indices;
use crate::rng::{Domain, StreamKey};
use crate::{Error, Result};

pub const DEFAULT_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// CDF values are clamped into `[U_CLAMP, 1 − U_CLAMP]` before taking logs.
const U_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    AndersonDarling,
    TnL2,
}

impl TestMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::AndersonDarling => "AndersonDarling",
            Self::TnL2 => "TnL2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calibration {
    /// `b` independent null replications.
    MonteCarlo { b: usize },
}

/// Result of a goodness-of-fit test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub method: TestMethod,
    pub statistic: f64,
    pub n: usize,
    /// `(level, null quantile)`, increasing in level.
    pub quantiles: Vec<(f64, f64)>,
    /// `(level, statistic > quantile)`.
    pub reject: Vec<(f64, bool)>,
    /// Monte-Carlo p-value `(1 + #{null ≥ statistic}) / (B + 1)`.
    pub p_value: f64,
    pub calibration: Calibration,
    pub seed: u64,
}

impl TestReport {
    pub fn rejects_at(&self, level: f64) -> Option<bool> {
        self.reject
            .iter()
            .find(|(l, _)| (l - level).abs() < 1e-12)
            .map(|(_, r)| *r)
    }

    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|(l, _)| (l - level).abs() < 1e-12)
            .map(|(_, q)| *q)
    }
}

/// Sorted null statistics for one method and sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct NullCalibration {
    pub method: TestMethod,
    pub n: usize,
    pub seed: u64,
    sorted: Vec<f64>,
}

impl NullCalibration {
    fn from_values(method: TestMethod, n: usize, seed: u64, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self {
            method,
            n,
            seed,
            sorted: values,
        }
    }

    pub fn b(&self) -> usize {
        self.sorted.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn quantile(&self, level: f64) -> f64 {
        quantile_sorted(&self.sorted, level)
    }

    pub fn p_value(&self, statistic: f64) -> f64 {
        let exceed = self.sorted.len() - self.sorted.partition_point(|v| *v < statistic);
        (1 + exceed) as f64 / (self.sorted.len() + 1) as f64
    }

    pub fn report(&self, statistic: f64, levels: &[f64]) -> TestReport {
        let mut levels = levels.to_vec();
        levels.sort_by(f64::total_cmp);
        let quantiles: Vec<(f64, f64)> = levels.iter().map(|&l| (l, self.quantile(l))).collect();
        let reject = quantiles.iter().map(|&(l, q)| (l, statistic > q)).collect();
        TestReport {
            method: self.method,
            statistic,
            n: self.n,
            quantiles,
            reject,
            p_value: self.p_value(statistic),
            calibration: Calibration::MonteCarlo { b: self.b() },
            seed: self.seed,
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (R's default, type 7).
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_beta_params(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Beta parameters must be positive, got ({a}, {b})"
        )));
    }
    Ok(())
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::InvalidParameter(
            "quantile levels must lie in (0, 1)".into(),
        ));
    }
    Ok(())
}

/// `A²` from probability-integral-transformed values.
fn ad_from_cdf(mut u: Vec<f64>) -> f64 {
    u.iter_mut()
        .for_each(|v| *v = v.clamp(U_CLAMP, 1.0 - U_CLAMP));
    u.sort_by(f64::total_cmp);
    let n = u.len();
    let nf = n as f64;
    let s: f64 = (0..n)
        .map(|j| (2 * j + 1) as f64 * (ln(u[j]) + ln(1.0 - u[n - 1 - j])))
        .sum();
    -nf - s / nf
}

/// Anderson-Darling `A²` of `sample` against `Beta(a, b)`.
pub fn anderson_darling_statistic(sample: &[f64], a: f64, b: f64) -> Result<f64> {
    check_beta_params(a, b)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(ad_from_cdf(
        sample.iter().map(|&y| reg_inc_beta(y, a, b)).collect(),
    ))
}

/// Null distribution of `A²` for samples of size `n`.
///
/// With a fully specified continuous null, `A²` is distribution-free, so the
/// replications use uniform samples directly.
pub fn ad_null_calibration(n: usize, b: usize, seed: u64) -> Result<NullCalibration> {
    if n == 0 || b == 0 {
        return Err(Error::InvalidParameter("n and B must be positive".into()));
    }
    let values = map_indices(b, |rep| {
        let mut s = StreamKey::new(seed, Domain::Bootstrap)
            .subkey(TestMethod::AndersonDarling as u64)
            .index(rep as u64)
            .stream();
        ad_from_cdf((0..n).map(|_| s.uniform_open()).collect())
    });
    Ok(NullCalibration::from_values(
        TestMethod::AndersonDarling,
        n,
        seed,
        values,
    ))
}

/// Anderson-Darling test against a precomputed null calibration.
pub fn anderson_darling_with(
    sample: &[f64],
    a: f64,
    b: f64,
    calibration: &NullCalibration,
    levels: &[f64],
) -> Result<TestReport> {
    check_levels(levels)?;
    if calibration.n != sample.len() || calibration.method != TestMethod::AndersonDarling {
        return Err(Error::InvalidParameter(
            "calibration does not match method or sample size".into(),
        ));
    }
    let stat = anderson_darling_statistic(sample, a, b)?;
    Ok(calibration.report(stat, levels))
}

/// Anderson-Darling test of `sample` against `Beta(a, b)` with a Monte-Carlo
/// p-value from `b_reps` null replications.
pub fn anderson_darling(
    sample: &[f64],
    a: f64,
    b: f64,
    b_reps: usize,
    seed: u64,
    levels: &[f64],
) -> Result<TestReport> {
    if sample.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "Anderson-Darling needs n >= 8, got {}",
            sample.len()
        )));
    }
    let calibration = ad_null_calibration(sample.len(), b_reps, seed)?;
    anderson_darling_with(sample, a, b, &calibration, levels)
}

/// Constants of the `T_n` integral for `Beta(a, b)`.
#[derive(Debug, Clone, Copy)]
struct TnConstants {
    a: f64,
    b: f64,
    /// `B(a + 1, b + 1) / B(a, b)`
    k1: f64,
    /// `∫₀¹ g² = B(2a + 1, 2b + 1) / B(a, b)²`
    k2: f64,
}

impl TnConstants {
    fn new(a: f64, b: f64) -> Self {
        let lb = ln_beta(a, b);
        Self {
            a,
            b,
            k1: exp(ln_beta(a + 1.0, b + 1.0) - lb),
            k2: exp(ln_beta(2.0 * a + 1.0, 2.0 * b + 1.0) - 2.0 * lb),
        }
    }

    /// `T_n = n ∫₀¹ (S(t) − g(t))² dt` with
    /// `S(t) = (1/n) Σ ((a + b)Yⱼ − a) 𝟙{Yⱼ ≥ t}` and
    /// `g(t) = tᵃ(1 − t)ᵇ / B(a, b)`.
    ///
    /// `S` is a step function, so `n∫S²` is a finite sum over the sorted
    /// sample, `∫S·g` reduces to `(1/n) Σ cⱼ ∫₀^{Yⱼ} g`, an incomplete-beta
    /// value, and `∫g²` is the constant `k2`.
    fn statistic(&self, mut y: Vec<f64>) -> f64 {
        y.sort_by(f64::total_cmp);
        let n = y.len() as f64;
        let (a, b) = (self.a, self.b);
        let c: Vec<f64> = y.iter().map(|&v| (a + b) * v - a).collect();

        let mut suffix = 0.0;
        let mut sq = 0.0;
        for k in (0..y.len()).rev() {
            suffix += c[k];
            let left = if k == 0 { 0.0 } else { y[k - 1] };
            sq += suffix * suffix * (y[k] - left);
        }
        let cross: f64 = y
            .iter()
            .zip(&c)
            .map(|(&v, &cj)| cj * reg_inc_beta(v, a + 1.0, b + 1.0))
            .sum();
        sq / n - 2.0 * self.k1 * cross + n * self.k2
    }
}

/// The L² statistic `T_n` of `sample` against `Beta(a, b)`.
pub fn tn_statistic(sample: &[f64], a: f64, b: f64) -> Result<f64> {
    check_beta_params(a, b)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParameter(
            "T_n sample values must lie in [0, 1]".into(),
        ));
    }
    Ok(TnConstants::new(a, b).statistic(sample.to_vec()).max(0.0))
}

/// Null distribution of `T_n`: `b_reps` independent size-`n` samples from
/// `Beta(a, b)`.
pub fn tn_null_calibration(
    n: usize,
    a: f64,
    b: f64,
    b_reps: usize,
    seed: u64,
) -> Result<NullCalibration> {
    check_beta_params(a, b)?;
    if n == 0 || b_reps == 0 {
        return Err(Error::InvalidParameter("n and B must be positive".into()));
    }
    let consts = TnConstants::new(a, b);
    let values = map_indices(b_reps, |rep| {
        let mut s = StreamKey::new(seed, Domain::Bootstrap)
            .subkey(TestMethod::TnL2 as u64)
            .index(rep as u64)
            .stream();
        let sample = (0..n).map(|_| sample_beta(a, b, &mut s)).collect();
        consts.statistic(sample).max(0.0)
    });
    Ok(NullCalibration::from_values(
        TestMethod::TnL2,
        n,
        seed,
        values,
    ))
}

/// Null quantiles of `T_n` at `levels` from `b_reps ≥ 1000` replications.
pub fn bootstrap_quantiles(
    n: usize,
    a: f64,
    b: f64,
    b_reps: usize,
    levels: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if b_reps < 1000 {
        return Err(Error::InvalidParameter(format!(
            "B must be at least 1000, got {b_reps}"
        )));
    }
    check_levels(levels)?;
    let cal = tn_null_calibration(n, a, b, b_reps, seed)?;
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    Ok(levels.into_iter().map(|l| (l, cal.quantile(l))).collect())
}

/// `T_n` test of `sample` against `Beta(a, b)`.
pub fn tn_test(
    sample: &[f64],
    a: f64,
    b: f64,
    b_reps: usize,
    seed: u64,
    levels: &[f64],
) -> Result<TestReport> {
    check_levels(levels)?;
    let stat = tn_statistic(sample, a, b)?;
    let cal = tn_null_calibration(sample.len(), a, b, b_reps, seed)?;
    Ok(cal.report(stat, levels))
}
