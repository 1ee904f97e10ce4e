//! Invariant laws of the McKean-Vlasov replicator.
//!
//! With neutral payoffs the frozen replicator (population law held fixed)
//! has a Dirichlet invariant law. The self-consistent law is the fixed point
//! of the map `µ ↦ T_µ` sending a Dirichlet law to the invariant law of the
//! replicator frozen at it. For two types the fixed point is
//! `Beta(s, 1 − s)` with `s = (a₁₂ − a₂₂)/(σ² − δ)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::solve_linear;
use crate::simplex::{
    bordered_equilibrium, InteractionSpec, ModelParams, PayoffMatrix, SkewMatrix,
};
use crate::stats::weighted_simplex_distance;
use crate::{Error, Result};

/// Strictly positive Dirichlet (or Beta, for d = 2) parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidParameter(
                "Dirichlet needs at least two parameters".into(),
            ));
        }
        if let Some((i, a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !(**a > 0.0) || !a.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "Dirichlet parameter {i} must be positive, got {a}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Mean of the law, `α / Σα`.
    pub fn mean(&self) -> Vec<f64> {
        let t = self.total();
        self.0.iter().map(|a| a / t).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl core::ops::Index<usize> for DirichletParams {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Outcome of [`dirichlet_fixed_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub alpha_star: DirichletParams,
    /// Number of map evaluations.
    pub iterations: usize,
    /// Wasserstein bound between the last two iterates.
    pub final_delta: f64,
    pub converged: bool,
    /// Last observed ratio of successive deltas, if at least two were seen.
    pub contraction_factor: Option<f64>,
}

/// `s = (a₁₂ − a₂₂)/(σ² − δ·E₁₂)`, the first Beta parameter (and mean) of the
/// two-type invariant law.
pub fn beta_s(params: &ModelParams) -> Result<f64> {
    params.check_beta_regime()?;
    let a = &params.payoff;
    let eff = params.delta * params.skew_entry()?;
    Ok((a.get(0, 1) - a.get(1, 1)) / (params.sigma * params.sigma - eff))
}

/// Iterates `m ← (a₁₂ − a₂₂ + δ·m)/σ²` from `m0`.
///
/// The map contracts with rate `q = δ/σ²`; iteration stops once the a
/// posteriori bound `q/(1 − q)·|m_{k+1} − m_k|` drops below `tol`, so the
/// returned value is within `tol` of the fixed point.
pub fn beta_fixed_point_iterate(
    params: &ModelParams,
    m0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    params.check_beta_regime()?;
    if !(m0 > 0.0 && m0 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "m0 must lie in (0, 1), got {m0}"
        )));
    }
    let a = &params.payoff;
    let s2 = params.sigma * params.sigma;
    let eff = params.delta * params.skew_entry()?;
    let gap = a.get(0, 1) - a.get(1, 1);
    let q = eff / s2;
    let mut m = m0;
    for k in 1..=max_iter {
        let next = (gap + eff * m) / s2;
        let bound = q / (1.0 - q) * (next - m).abs();
        m = next;
        if bound <= tol {
            return Ok((m, k));
        }
    }
    Err(Error::MaxIterations(max_iter))
}

/// Solves the perturbation system for `Â = A + δ_eff·E`.
///
/// Writing `α̂ = (α₁ + ε₁, …, α_{d−1} + ε_{d−1}, α_d − Σε)`, the condition that
/// `Â′α̂` is constant gives `d − 1` linear equations `H ε = ℓ` (row `i`
/// compares row `i + 1` of `Â′α̂` with row 1). Returns `(ε, α̂)`.
pub fn solve_perturbation(
    a: &PayoffMatrix,
    sigma: f64,
    alpha: &DirichletParams,
    e: &SkewMatrix,
    delta_eff: f64,
) -> Result<(Vec<f64>, DirichletParams)> {
    let h = perturbation_matrix(a, e, delta_eff)?;
    let rhs = perturbation_rhs(alpha, e, delta_eff)?;
    let eps = solve_linear(&h, &rhs)?;
    let d = a.dim();
    let mut hat = Vec::with_capacity(d);
    for i in 0..d - 1 {
        hat.push(alpha[i] + eps[i]);
    }
    hat.push(alpha[d - 1] - eps.iter().sum::<f64>());
    if let Some((index, &value)) = hat.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::ToleranceExceeded { index, value });
    }
    let perturbed = a.add_scaled(delta_eff, e)?.half_shifted(sigma);
    let row_values = perturbed.mul_vec(&hat);
    let (lo, hi) = row_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    if hi - lo > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "perturbed equilibrium is not balanced (spread {})",
            hi - lo
        )));
    }
    Ok((eps, DirichletParams(hat)))
}

/// The `(d−1)×(d−1)` matrix `H^(δ)`.
pub fn perturbation_matrix(a: &PayoffMatrix, e: &SkewMatrix, delta: f64) -> Result<Vec<Vec<f64>>> {
    let d = a.dim();
    if e.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: e.dim(),
        });
    }
    let reduced = |i: usize, j: usize| {
        (a.get(i, j) - a.get(i, d - 1)) + delta * (e.get(i, j) - e.get(i, d - 1))
    };
    Ok((1..d)
        .map(|i| (0..d - 1).map(|j| reduced(i, j) - reduced(0, j)).collect())
        .collect())
}

/// Right-hand side `ℓ_i = −δ((Eα)_{i+1} − (Eα)_1)`; for the standard block
/// matrix this is `(δ(α₁ + α₂), δα₂, …, δα₂)`.
pub fn perturbation_rhs(alpha: &DirichletParams, e: &SkewMatrix, delta: f64) -> Result<Vec<f64>> {
    let d = alpha.dim();
    if e.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: e.dim(),
        });
    }
    let mut ea = vec![0.0; d];
    e.mul_vec_into(alpha.as_slice(), &mut ea);
    Ok((1..d).map(|i| -delta * (ea[i] - ea[0])).collect())
}

/// The map `µ ↦ T_µ` restricted to Dirichlet laws.
///
/// For two types this is exact: the replicator frozen at mean `m` has the
/// Beta law with parameters `((â₁₂ − â₂₂)/σ², (â₂₁ − â₁₁)/σ²)` where
/// `Â = A + δ m₁ E`. For more types the parameters are taken to be the
/// interior equilibrium of `Â′` (experimental).
pub fn t_map(params: &ModelParams, mu: &DirichletParams) -> Result<DirichletParams> {
    let d = params.dim();
    if mu.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: mu.dim(),
        });
    }
    let e = match &params.interaction {
        InteractionSpec::MeanSkew(e) => e,
        InteractionSpec::PairwiseKernel(_) => {
            return Err(Error::UnsupportedInteraction(
                "t_map needs a mean-skew interaction",
            ))
        }
    };
    let m1 = mu.mean()[0];
    let a = &params.payoff;
    let delta_eff = params.delta * m1;
    if d == 2 {
        let hat = a.add_scaled(delta_eff, e)?;
        let s2 = params.sigma * params.sigma;
        let p = (hat.get(0, 1) - hat.get(1, 1)) / s2;
        let q = (hat.get(1, 0) - hat.get(0, 0)) / s2;
        if p <= 0.0 || q <= 0.0 {
            return Err(Error::RegimeViolated(format!(
                "frozen Beta parameters ({p}, {q}) are not positive"
            )));
        }
        return DirichletParams::beta(p, q);
    }
    let (base, _) = bordered_equilibrium(&a.half_shifted(params.sigma))?;
    let base = DirichletParams::new(base).map_err(|_| Error::EquilibriumNotInterior {
        index: 0,
        value: 0.0,
    })?;
    let (_, hat) = solve_perturbation(a, params.sigma, &base, e, delta_eff)?;
    Ok(hat)
}

/// Iterates [`t_map`] from `mu0` until successive iterates are within `tol`
/// in the Dirichlet Wasserstein bound `Σᵢ 2(d − i)|Δαᵢ|`.
///
/// Fails with [`Error::NotContractive`] if that distance grows on three
/// consecutive iterations. Hitting `max_iter` is not an error; the report
/// then has `converged == false`.
pub fn dirichlet_fixed_point(
    params: &ModelParams,
    mu0: &DirichletParams,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointReport> {
    let mut current = mu0.clone();
    let mut last_delta: Option<f64> = None;
    let mut growth_streak = 0;
    let mut factor = None;
    let mut iterations = 0;
    let mut final_delta = f64::INFINITY;
    while iterations < max_iter {
        let next = t_map(params, &current)?;
        iterations += 1;
        let delta = weighted_simplex_distance(current.as_slice(), next.as_slice());
        if let Some(prev) = last_delta {
            if prev > 0.0 {
                factor = Some(delta / prev);
            }
            if delta > prev {
                growth_streak += 1;
                if growth_streak >= 3 {
                    return Err(Error::NotContractive);
                }
            } else {
                growth_streak = 0;
            }
        }
        last_delta = Some(delta);
        final_delta = delta;
        current = next;
        if delta <= tol {
            break;
        }
    }
    Ok(FixedPointReport {
        alpha_star: current,
        iterations,
        final_delta,
        converged: final_delta <= tol,
        contraction_factor: factor,
    })
}
