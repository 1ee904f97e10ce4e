//! Simplex geometry and payoff algebra.
//!
//! Notation used throughout the crate: `A` is the raw payoff matrix, the
//! drift uses the modified matrix `Ã = A − σ²I`, and the tangent projection
//! of a fitness vector `F` at `x` is `x ∘ (F − ⟨x, F⟩𝟏)`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{dot, solve_linear};
use crate::mckean_vlasov::DirichletParams;
use crate::{Error, Result};

/// Sum tolerance accepted (and then corrected) by [`SimplexPoint::new`].
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Negative coordinates down to this value are clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// A point of the probability simplex: nonnegative coordinates summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Validates and lightly repairs `coords`.
    ///
    /// Coordinates in `[-1e-12, 0)` are clamped to 0 and a sum within
    /// `1 ± 1e-9` is renormalized; anything further off is rejected.
    pub fn new(mut coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidSimplexPoint("empty coordinate vector".into()));
        }
        for (i, c) in coords.iter_mut().enumerate() {
            if !c.is_finite() {
                return Err(Error::InvalidSimplexPoint(format!(
                    "coordinate {i} is not finite"
                )));
            }
            if *c < 0.0 {
                if *c < -NEGATIVE_TOLERANCE {
                    return Err(Error::InvalidSimplexPoint(format!(
                        "coordinate {i} is negative ({c})"
                    )));
                }
                *c = 0.0;
            }
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidSimplexPoint(format!(
                "coordinates sum to {sum}, not 1"
            )));
        }
        coords.iter_mut().for_each(|c| *c /= sum);
        Ok(Self(coords))
    }

    /// Normalizes a vector of nonnegative weights with positive total.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !(sum > 0.0) {
            return Err(Error::InvalidSimplexPoint(
                "weights must be finite, nonnegative and not all zero".into(),
            ));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self(weights))
    }

    /// Two-type point `(x1, 1 − x1)`.
    pub fn binary(x1: f64) -> Result<Self> {
        Self::new(vec![x1, 1.0 - x1])
    }

    pub fn vertex(d: usize, i: usize) -> Self {
        assert!(i < d, "vertex index {i} out of range for d = {d}");
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        Self(v)
    }

    pub fn barycenter(d: usize) -> Self {
        assert!(d > 0);
        Self(vec![1.0 / d as f64; d])
    }

    /// Wraps coordinates already known to be a valid point.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| *c >= 0.0));
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min_coord(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&c| c > 0.0)
    }
}

impl core::ops::Index<usize> for SimplexPoint {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A vector tangent to the simplex (coordinates sum to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(Vec<f64>);

impl TangentVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let sum: f64 = coords.iter().sum();
        let scale = coords.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        if (sum / scale).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "tangent vector coordinates sum to {sum}"
            )));
        }
        Ok(Self(coords))
    }

    pub fn zero(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl core::ops::Index<usize> for TangentVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A square payoff matrix with finite entries and dimension at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    d: usize,
    entries: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        if d < 2 {
            return Err(Error::InvalidParameter("payoff matrix needs d >= 2".into()));
        }
        let mut entries = Vec::with_capacity(d * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "payoff entries must be finite".into(),
                ));
            }
            entries.extend(row);
        }
        Ok(Self { d, entries })
    }

    pub fn identity(d: usize) -> Self {
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1.0;
        }
        Self { d, entries }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|i| self.row(i).to_vec()).collect()
    }

    /// `out = self · x`.
    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `self + scale · other`.
    pub fn add_scaled(&self, scale: f64, other: &SkewMatrix) -> Result<Self> {
        if other.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: other.dim(),
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, e)| a + scale * e)
            .collect();
        Ok(Self { d: self.d, entries })
    }

    /// `A − σ²I`, the matrix entering the drift.
    pub fn tilde(&self, sigma: f64) -> Self {
        let mut out = self.clone();
        let s2 = sigma * sigma;
        for i in 0..self.d {
            out.entries[i * self.d + i] -= s2;
        }
        out
    }

    /// `A − (σ²/2)·𝟏𝟏ᵀ`, the matrix whose interior equilibrium parameterizes
    /// the Dirichlet invariant law.
    pub fn half_shifted(&self, sigma: f64) -> Self {
        let shift = 0.5 * sigma * sigma;
        Self {
            d: self.d,
            entries: self.entries.iter().map(|a| a - shift).collect(),
        }
    }
}

/// A skew-symmetric matrix, `E = −Eᵀ` exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    d: usize,
    entries: Vec<f64>,
}

impl SkewMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        let mut entries = Vec::with_capacity(d * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            entries.extend(row);
        }
        for i in 0..d {
            for j in 0..d {
                if entries[i * d + j] != -entries[j * d + i] || !entries[i * d + j].is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "interaction matrix is not skew-symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { d, entries })
    }

    /// The block-form matrix with `[[0, 1], [−1, 0]]` acting on the first two
    /// coordinates and zeros elsewhere.
    pub fn standard(d: usize) -> Self {
        assert!(d >= 2);
        let mut entries = vec![0.0; d * d];
        entries[1] = 1.0;
        entries[d] = -1.0;
        Self { d, entries }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d)
            .map(|i| self.entries[i * self.d..(i + 1) * self.d].to_vec())
            .collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.entries[i * self.d..(i + 1) * self.d], x);
        }
    }
}

/// A pairwise interaction `K(x, y)`; the drift uses `δ · (1/N) Σⱼ K(xᵢ, xⱼ)`.
pub trait PairKernel: Send + Sync + fmt::Debug {
    fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]);
}

/// `K(x, y) = y₁ · E x`: the pairwise form of [`InteractionSpec::MeanSkew`].
#[derive(Debug, Clone)]
pub struct LinearSkewKernel(pub SkewMatrix);

impl PairKernel for LinearSkewKernel {
    fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.0.mul_vec_into(x, out);
        out.iter_mut().for_each(|o| *o *= y[0]);
    }
}

/// How the population acts on each replicator.
#[derive(Debug, Clone)]
pub enum InteractionSpec {
    /// `Υ(x, µ) = δ · (∫ y₁ µ(dy)) · E x`: depends on the population only
    /// through the mean of the first coordinate.
    MeanSkew(SkewMatrix),
    /// A general pairwise kernel, averaged over all particles (O(N²)).
    PairwiseKernel(Arc<dyn PairKernel>),
}

impl InteractionSpec {
    pub fn standard(d: usize) -> Self {
        Self::MeanSkew(SkewMatrix::standard(d))
    }
}

/// Payoff, noise scale, interaction strength and form.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub payoff: PayoffMatrix,
    pub sigma: f64,
    pub delta: f64,
    pub interaction: InteractionSpec,
    tilde: PayoffMatrix,
}

impl ModelParams {
    pub fn new(
        payoff: PayoffMatrix,
        sigma: f64,
        delta: f64,
        interaction: InteractionSpec,
    ) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delta must be nonnegative, got {delta}"
            )));
        }
        if let InteractionSpec::MeanSkew(e) = &interaction {
            if e.dim() != payoff.dim() {
                return Err(Error::DimensionMismatch {
                    expected: payoff.dim(),
                    actual: e.dim(),
                });
            }
        }
        let tilde = payoff.tilde(sigma);
        Ok(Self {
            payoff,
            sigma,
            delta,
            interaction,
            tilde,
        })
    }

    /// Parameters with the standard skew interaction.
    pub fn with_standard_interaction(payoff: PayoffMatrix, sigma: f64, delta: f64) -> Result<Self> {
        let d = payoff.dim();
        Self::new(payoff, sigma, delta, InteractionSpec::standard(d))
    }

    /// A = ((0.5, 1), (1, 0.5)), σ = 1, δ = 0.05.
    pub fn ps1() -> Self {
        let a = PayoffMatrix::new(vec![vec![0.5, 1.0], vec![1.0, 0.5]]).expect("valid preset");
        Self::with_standard_interaction(a, 1.0, 0.05).expect("valid preset")
    }

    /// A = ((0.6, 0.9), (1, 0.4)), σ = 0.9487, δ = 0.04.
    pub fn ps2() -> Self {
        let a = PayoffMatrix::new(vec![vec![0.6, 0.9], vec![1.0, 0.4]]).expect("valid preset");
        Self::with_standard_interaction(a, 0.9487, 0.04).expect("valid preset")
    }

    pub fn dim(&self) -> usize {
        self.payoff.dim()
    }

    /// `Ã = A − σ²I`.
    pub fn tilde_payoff(&self) -> &PayoffMatrix {
        &self.tilde
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(
            self.payoff.clone(),
            self.sigma,
            delta,
            self.interaction.clone(),
        )
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(
            self.payoff.clone(),
            sigma,
            self.delta,
            self.interaction.clone(),
        )
    }

    /// Checks `0 ≤ δ·e < min{σ², a₁₂ − a₂₂, a₂₁ − a₁₁}` for a two-type model
    /// with skew entry `e = E₁₂`.
    pub fn check_beta_regime(&self) -> Result<()> {
        if self.dim() != 2 {
            return Err(Error::RegimeViolated(format!(
                "two-type model required, got d = {}",
                self.dim()
            )));
        }
        let e12 = match &self.interaction {
            InteractionSpec::MeanSkew(e) => e.get(0, 1),
            InteractionSpec::PairwiseKernel(_) => {
                return Err(Error::UnsupportedInteraction(
                    "pairwise kernel has no Beta fixed point",
                ))
            }
        };
        let a = &self.payoff;
        let gap1 = a.get(0, 1) - a.get(1, 1);
        let gap2 = a.get(1, 0) - a.get(0, 0);
        let s2 = self.sigma * self.sigma;
        let eff = self.delta * e12;
        if gap1 <= 0.0 || gap2 <= 0.0 {
            return Err(Error::RegimeViolated(format!(
                "need a12 - a22 > 0 and a21 - a11 > 0, got {gap1} and {gap2}"
            )));
        }
        if eff < 0.0 || eff >= s2 || eff >= gap1 || eff >= gap2 {
            return Err(Error::RegimeViolated(format!(
                "need 0 <= delta < min(sigma^2, a12 - a22, a21 - a11) = {}, got {eff}",
                s2.min(gap1).min(gap2)
            )));
        }
        Ok(())
    }

    pub(crate) fn skew_entry(&self) -> Result<f64> {
        match &self.interaction {
            InteractionSpec::MeanSkew(e) => Ok(e.get(0, 1)),
            InteractionSpec::PairwiseKernel(_) => Err(Error::UnsupportedInteraction(
                "pairwise kernel has no matrix form",
            )),
        }
    }
}

/// Writes `x ∘ (f − ⟨x, f⟩𝟏)` into `out`.
#[inline]
pub fn project_tangent_into(f: &[f64], x: &[f64], out: &mut [f64]) {
    let avg = dot(x, f);
    for ((o, &xi), &fi) in out.iter_mut().zip(x).zip(f) {
        *o = xi * (fi - avg);
    }
}

/// The tangent projection `Π_T F(x) = x ∘ (F − ⟨x, F⟩𝟏)`.
pub fn project_tangent(f: &[f64], x: &SimplexPoint) -> Result<TangentVector> {
    if f.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: f.len(),
        });
    }
    let mut out = vec![0.0; f.len()];
    project_tangent_into(f, x.coords(), &mut out);
    Ok(TangentVector(out))
}

/// Residuals `a_ij + a_ji − a_ii − a_jj − σ²` for all pairs `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct C1Residuals {
    pub pairs: Vec<(usize, usize)>,
    pub residuals: Vec<f64>,
}

impl C1Residuals {
    pub fn max_abs(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_abs() <= tol
    }
}

/// Default tolerance for the neutrality check; the second preset only
/// satisfies it to about 3e-5 because σ is a rounded decimal.
pub const C1_DEFAULT_TOL: f64 = 1e-3;

/// Neutrality check: `a_ij + a_ji − a_ii − a_jj = σ²` for every pair.
pub fn check_c1(a: &PayoffMatrix, sigma: f64) -> C1Residuals {
    let d = a.dim();
    let s2 = sigma * sigma;
    let mut pairs = Vec::new();
    let mut residuals = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            pairs.push((i, j));
            residuals.push(a.get(i, j) + a.get(j, i) - a.get(i, i) - a.get(j, j) - s2);
        }
    }
    C1Residuals { pairs, residuals }
}

/// Interior equilibrium `α` of the modified payoff and its common value `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEquilibrium {
    pub alpha: DirichletParams,
    pub c: f64,
}

/// Solves `A′α = c𝟏`, `Σα = 1` with `A′ = A − σ²/2` and requires `α > 0`.
pub fn check_c2(a: &PayoffMatrix, sigma: f64) -> Result<InteriorEquilibrium> {
    let (alpha, c) = bordered_equilibrium(&a.half_shifted(sigma))?;
    if let Some((index, &value)) = alpha.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::EquilibriumNotInterior { index, value });
    }
    Ok(InteriorEquilibrium {
        alpha: DirichletParams::new(alpha)?,
        c,
    })
}

/// Solves the bordered system `[M −𝟏; 𝟏ᵀ 0]·(α, c) = (0, 1)`.
pub(crate) fn bordered_equilibrium(m: &PayoffMatrix) -> Result<(Vec<f64>, f64)> {
    let d = m.dim();
    let mut rows = Vec::with_capacity(d + 1);
    for i in 0..d {
        let mut r = m.row(i).to_vec();
        r.push(-1.0);
        rows.push(r);
    }
    let mut last = vec![1.0; d];
    last.push(0.0);
    rows.push(last);
    let mut rhs = vec![0.0; d + 1];
    rhs[d] = 1.0;
    let mut sol = solve_linear(&rows, &rhs).map_err(|e| match e {
        Error::SingularSystem => Error::NoInteriorEquilibrium,
        other => other,
    })?;
    let c = sol.pop().expect("d + 1 unknowns");
    Ok((sol, c))
}

/// Invasion growth rates `h(x) = Ãx − ⟨x, Ãx⟩𝟏`.
pub fn invasion_rates(x: &SimplexPoint, a: &PayoffMatrix, sigma: f64) -> Result<Vec<f64>> {
    if x.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: x.dim(),
        });
    }
    let phi = a.tilde(sigma).mul_vec(x.coords());
    let avg = dot(x.coords(), &phi);
    Ok(phi.into_iter().map(|p| p - avg).collect())
}

/// The frozen-measure payoff `Ã + δ·m₁·E` for a population with mean `m`.
pub fn effective_payoff(params: &ModelParams, m: &[f64]) -> Result<PayoffMatrix> {
    if m.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: m.len(),
        });
    }
    match &params.interaction {
        InteractionSpec::MeanSkew(e) => params.tilde.add_scaled(params.delta * m[0], e),
        InteractionSpec::PairwiseKernel(_) => Err(Error::UnsupportedInteraction(
            "pairwise kernel has no matrix form",
        )),
    }
}
