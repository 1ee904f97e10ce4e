//! Wasserstein distances: the empirical one-dimensional distance, the
//! Dirichlet parameter bound, and the shared-Gamma coupling behind it.

use alloc::vec::Vec;
use alloc::{format, vec};

use super::sampling::{ln_gamma_variate, normalize_logs};
use crate::math::{round, sqrt};
use crate::mckean_vlasov::DirichletParams;
use crate::par::map_indices;
use crate::rng::{Domain, Stream, StreamKey};
use crate::simplex::SimplexPoint;
use crate::{Error, Result};

/// `Was₁` between two empirical measures on the line: the integral of
/// `|F⁻¹(u) − G⁻¹(u)|` over `u ∈ (0, 1)`, evaluated exactly on the merged
/// quantile steps. For equal sizes this is `mean |x₍ᵢ₎ − y₍ᵢ₎|`.
pub fn wasserstein1_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    if xs.len() == ys.len() {
        let n = xs.len() as f64;
        return Ok(xs.iter().zip(&ys).map(|(a, b)| (a - b).abs()).sum::<f64>() / n);
    }
    let (n, m) = (xs.len(), ys.len());
    // Breakpoints i/n and j/m compared exactly as i·m versus j·n.
    let (mut i, mut j) = (0usize, 0usize);
    let mut last = 0u128;
    let total = (n as u128) * (m as u128);
    let mut acc = 0.0;
    while i < n && j < m {
        let next_x = (i as u128 + 1) * m as u128;
        let next_y = (j as u128 + 1) * n as u128;
        let next = next_x.min(next_y);
        acc += (next - last) as f64 * (xs[i] - ys[j]).abs();
        last = next;
        if next == next_x {
            i += 1;
        }
        if next == next_y {
            j += 1;
        }
    }
    Ok(acc / total as f64)
}

/// `Σ_{i=1}^{d−1} 2(d − i)|aᵢ − bᵢ|` without any normalization check.
pub fn weighted_simplex_distance(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    (0..d.saturating_sub(1))
        .map(|i| 2.0 * (d - 1 - i) as f64 * (a[i] - b[i]).abs())
        .sum()
}

/// Upper bound on `Was₁(D_a, D_b)` for Dirichlet laws whose parameters both
/// sum to 1.
pub fn dirichlet_was_bound(a: &DirichletParams, b: &DirichletParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    for p in [a, b] {
        if (p.total() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "Dirichlet parameters must sum to 1, got {}",
                p.total()
            )));
        }
    }
    Ok(weighted_simplex_distance(a.as_slice(), b.as_slice()))
}

/// Integer counts `mᵢ ≈ aᵢ·denom` with the last entry absorbing the rounding
/// so that `Σ mᵢ = denom`.
pub fn rationalize(a: &DirichletParams, denom: u64) -> Result<Vec<u64>> {
    let d = a.dim();
    let total = a.total();
    let mut counts = Vec::with_capacity(d);
    let mut used: i64 = 0;
    for i in 0..d - 1 {
        let c = round(a[i] / total * denom as f64) as i64;
        used += c;
        counts.push(c);
    }
    counts.push(denom as i64 - used);
    if let Some(index) = counts.iter().position(|&c| c <= 0) {
        return Err(Error::InvalidRationalization { index });
    }
    Ok(counts.into_iter().map(|c| c as u64).collect())
}

/// The shared-Gamma coupling of two Dirichlet laws with rational parameters
/// `m/N` and `n/N`.
///
/// `N` i.i.d. `Gamma(1/N, 1)` variables are laid out in a row; block `i` of
/// `X` sums positions `(M_{i−1}, M_i]` and block `i` of `Y` sums
/// `(N_{i−1}, N_i]` where `M`, `N` are cumulative counts. Both vectors are
/// normalized by the common total. Positions between consecutive merged
/// breakpoints always fall in the same pair of blocks, so each such segment
/// of length `L` is drawn as a single `Gamma(L/N, 1)` variable; the joint law
/// is unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletCoupling {
    pub m: Vec<u64>,
    pub n: Vec<u64>,
    pub denom: u64,
    /// `(shape, block in X, block in Y)` per segment.
    segments: Vec<(f64, usize, usize)>,
}

impl DirichletCoupling {
    pub fn new(a: &DirichletParams, b: &DirichletParams, denom: u64) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                actual: b.dim(),
            });
        }
        let m = rationalize(a, denom)?;
        let n = rationalize(b, denom)?;
        Self::from_counts(m, n)
    }

    pub fn from_counts(m: Vec<u64>, n: Vec<u64>) -> Result<Self> {
        if m.len() != n.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                actual: n.len(),
            });
        }
        if let Some(index) = m.iter().chain(&n).position(|&c| c == 0) {
            return Err(Error::InvalidRationalization {
                index: index % m.len(),
            });
        }
        let denom: u64 = m.iter().sum();
        if n.iter().sum::<u64>() != denom {
            return Err(Error::InvalidParameter(
                "counts must share a common total".into(),
            ));
        }
        let cum = |c: &[u64]| {
            let mut acc = 0;
            c.iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect::<Vec<u64>>()
        };
        let (cm, cn) = (cum(&m), cum(&n));
        let mut points: Vec<u64> = cm.iter().chain(&cn).copied().collect();
        points.push(0);
        points.sort_unstable();
        points.dedup();
        let segments = points
            .windows(2)
            .map(|w| {
                let start = w[0];
                let bx = cm.partition_point(|&c| c <= start);
                let by = cn.partition_point(|&c| c <= start);
                ((w[1] - w[0]) as f64 / denom as f64, bx, by)
            })
            .collect();
        Ok(Self {
            m,
            n,
            denom,
            segments,
        })
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Draws one coupled pair `(X, Y)`.
    pub fn sample(&self, stream: &mut Stream) -> (SimplexPoint, SimplexPoint) {
        let d = self.m.len();
        let logs: Vec<f64> = self
            .segments
            .iter()
            .map(|&(shape, _, _)| ln_gamma_variate(shape, stream))
            .collect();
        let shares = normalize_logs(&logs);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        for (&(_, bx, by), s) in self.segments.iter().zip(shares) {
            x[bx] += s;
            y[by] += s;
        }
        (SimplexPoint::from_raw(x), SimplexPoint::from_raw(y))
    }

    /// The parameters actually sampled, `m/N` and `n/N`.
    pub fn rational_params(&self) -> (DirichletParams, DirichletParams) {
        let f = |c: &[u64]| {
            DirichletParams::new(c.iter().map(|&v| v as f64 / self.denom as f64).collect())
                .expect("positive counts")
        };
        (f(&self.m), f(&self.n))
    }
}

/// One coupled pair with `X ~ Dirichlet(a)` and `Y ~ Dirichlet(b)` after
/// rounding both to denominator `denom`.
pub fn dirichlet_coupled_pair(
    a: &DirichletParams,
    b: &DirichletParams,
    denom: u64,
    stream: &mut Stream,
) -> Result<(SimplexPoint, SimplexPoint)> {
    Ok(DirichletCoupling::new(a, b, denom)?.sample(stream))
}

/// Monte-Carlo estimate of `E Σᵢ |Xᵢ − Yᵢ|` under the coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub pairs: usize,
    /// Transport bound evaluated at the rationalized parameters.
    pub bound: f64,
}

impl CoupledEstimate {
    /// `mean ≤ bound + k·SE`.
    pub fn within(&self, k: f64) -> bool {
        self.mean <= self.bound + k * self.std_error
    }
}

/// Estimates the coupled transport cost from `pairs` independent draws.
pub fn coupled_was_estimate(
    a: &DirichletParams,
    b: &DirichletParams,
    denom: u64,
    pairs: usize,
    seed: u64,
) -> Result<CoupledEstimate> {
    if pairs < 2 {
        return Err(Error::InvalidParameter("need at least two pairs".into()));
    }
    let coupling = DirichletCoupling::new(a, b, denom)?;
    let (ra, rb) = coupling.rational_params();
    let bound = weighted_simplex_distance(ra.as_slice(), rb.as_slice());
    const CHUNK: usize = 4096;
    let chunks = pairs.div_ceil(CHUNK);
    let partial = map_indices(chunks, |c| {
        let mut s = StreamKey::new(seed, Domain::Sampling)
            .index(c as u64)
            .stream();
        let count = CHUNK.min(pairs - c * CHUNK);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..count {
            let (x, y) = coupling.sample(&mut s);
            let cost: f64 = x
                .coords()
                .iter()
                .zip(y.coords())
                .map(|(p, q)| (p - q).abs())
                .sum();
            sum += cost;
            sum_sq += cost * cost;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partial
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let nf = pairs as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(CoupledEstimate {
        mean,
        std_error: sqrt(var / nf),
        pairs,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_shifted_samples() {
        let x = [0.1, 0.5, 0.3, 0.9];
        assert_eq!(wasserstein1_1d(&x, &x).unwrap(), 0.0);
        let y: Vec<f64> = x.iter().map(|v| v + 0.25).collect();
        assert!((wasserstein1_1d(&x, &y).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unequal_sizes() {
        // F⁻¹ = 0 on (0, 1/2], 1 on (1/2, 1]; G⁻¹ = 0 on (0, 1/3], 1 after.
        let w = wasserstein1_1d(&[0.0, 1.0], &[0.0, 1.0, 1.0]).unwrap();
        assert!((w - (0.5 - 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(wasserstein1_1d(&[], &[1.0]), Err(Error::EmptySample));
    }

    #[test]
    fn bound_examples() {
        let a = DirichletParams::beta(0.6, 0.4).unwrap();
        let b = DirichletParams::beta(0.5, 0.5).unwrap();
        assert!((dirichlet_was_bound(&a, &b).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(dirichlet_was_bound(&a, &a).unwrap(), 0.0);
        let a = DirichletParams::new(vec![0.5, 0.3, 0.2]).unwrap();
        let b = DirichletParams::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert!((dirichlet_was_bound(&a, &b).unwrap() - 0.6).abs() < 1e-15);
        let off = DirichletParams::beta(0.6, 0.5).unwrap();
        assert!(dirichlet_was_bound(&off, &b).is_err());
    }

    #[test]
    fn rationalization() {
        let a = DirichletParams::new(vec![0.33333, 0.33333, 0.33334]).unwrap();
        let m = rationalize(&a, 100).unwrap();
        assert_eq!(m.iter().sum::<u64>(), 100);
        assert_eq!(m, vec![33, 33, 34]);
        let tiny = DirichletParams::new(vec![0.001, 0.999]).unwrap();
        assert_eq!(
            rationalize(&tiny, 100),
            Err(Error::InvalidRationalization { index: 0 })
        );
    }

    #[test]
    fn equal_params_couple_exactly() {
        let a = DirichletParams::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mut s = StreamKey::new(1, Domain::Sampling).stream();
        for _ in 0..100 {
            let (x, y) = dirichlet_coupled_pair(&a, &a, 10_000, &mut s).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn segments_merge_breakpoints() {
        let c = DirichletCoupling::from_counts(vec![6, 4], vec![5, 5]).unwrap();
        // breakpoints 0, 5, 6, 10
        assert_eq!(c.segment_count(), 3);
        assert_eq!(c.segments[0], (0.5, 0, 0));
        assert_eq!(c.segments[1], (0.1, 0, 1));
        assert_eq!(c.segments[2], (0.4, 1, 1));
    }
}
