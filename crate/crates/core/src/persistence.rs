//! Stochastic-persistence diagnostics: boundary equilibria and their
//! invasion rates, a weight vector certifying positive average invasion,
//! the Lyapunov function `H`, and occupation of the extinction set.

use alloc::vec;
use alloc::vec::Vec;

use crate::lp::{LinearProgram, Relation};
use crate::math::{exp, ln, sqrt};
use crate::simplex::{bordered_equilibrium, invasion_rates, PayoffMatrix, SimplexPoint};
use crate::{Error, Result};

pub const MAX_FACE_DIM: usize = 10;
pub const P_MIN: f64 = 1e-6;
pub const DEFAULT_H_CAP: f64 = 1e6;
const RESIDUAL_TOL: f64 = 1e-9;

/// A rest point of the deterministic flow `Π_T[Ãx]` lying in the relative
/// interior of a proper face.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEquilibrium {
    /// Indices of the types present, ascending.
    pub support: Vec<usize>,
    pub point: SimplexPoint,
    /// `h(x*)` for every type; entries on the support vanish.
    pub rates: Vec<f64>,
}

impl BoundaryEquilibrium {
    /// `(type, rate)` for the absent types.
    pub fn absent_rates(&self) -> Vec<(usize, f64)> {
        (0..self.rates.len())
            .filter(|i| !self.support.contains(i))
            .map(|i| (i, self.rates[i]))
            .collect()
    }
}

/// Vertices and face-interior equilibria of every proper face.
pub fn face_equilibria(a: &PayoffMatrix, sigma: f64) -> Result<Vec<BoundaryEquilibrium>> {
    let d = a.dim();
    if d > MAX_FACE_DIM {
        return Err(Error::InvalidParameter(alloc::format!(
            "face enumeration supports d <= {MAX_FACE_DIM}, got {d}"
        )));
    }
    let tilde = a.tilde(sigma);
    let full = (1usize << d) - 1;
    let mut out = Vec::new();
    for mask in 1..full {
        let support: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
        let mut x = vec![0.0; d];
        if support.len() == 1 {
            x[support[0]] = 1.0;
        } else {
            let rows = support
                .iter()
                .map(|&i| support.iter().map(|&j| tilde.get(i, j)).collect())
                .collect();
            let restricted = PayoffMatrix::new(rows)?;
            let Ok((alpha, _)) = bordered_equilibrium(&restricted) else {
                continue;
            };
            if alpha.iter().any(|&v| !(v > 0.0)) {
                continue;
            }
            for (&i, v) in support.iter().zip(alpha) {
                x[i] = v;
            }
        }
        let point = SimplexPoint::from_raw(x);
        let rates = invasion_rates(&point, a, sigma)?;
        let residual = support
            .iter()
            .map(|&i| (point[i] * rates[i]).abs())
            .fold(0.0, f64::max);
        if residual > RESIDUAL_TOL {
            continue;
        }
        out.push(BoundaryEquilibrium {
            support,
            point,
            rates,
        });
    }
    Ok(out)
}

/// A weight vector `p > 0` with `⟨p, h(x*)⟩ ≥ ρ > 0` at every listed
/// boundary equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceCertificate {
    pub p: Vec<f64>,
    pub rho: f64,
    pub equilibria: Vec<BoundaryEquilibrium>,
}

impl PersistenceCertificate {
    /// Re-evaluates every constraint without the solver.
    pub fn verify(&self) -> bool {
        self.rho > 0.0
            && self.p.iter().all(|&v| v > 0.0)
            && self.equilibria.iter().all(|e| {
                let s: f64 = self.p.iter().zip(&e.rates).map(|(p, h)| p * h).sum();
                s >= self.rho - 1e-9 * (1.0 + self.rho.abs())
            })
    }
}

/// The optimal value of `max ρ` subject to `⟨p, h(x*)⟩ ≥ ρ`, `Σp = d`,
/// `p ≥ P_MIN`, with a maximizing `p`.
pub fn max_invasion_margin(
    equilibria: &[BoundaryEquilibrium],
    d: usize,
) -> Result<(Vec<f64>, f64)> {
    if equilibria.is_empty() {
        return Err(Error::InvalidParameter("no equilibria to certify".into()));
    }
    // Variables: q = p − P_MIN (d entries), ρ⁺, ρ⁻.
    let mut objective = vec![0.0; d + 2];
    objective[d] = 1.0;
    objective[d + 1] = -1.0;
    let mut lp = LinearProgram::new(objective);
    for e in equilibria {
        if e.rates.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: e.rates.len(),
            });
        }
        let mut row = e.rates.clone();
        row.push(-1.0);
        row.push(1.0);
        let shift: f64 = e.rates.iter().sum::<f64>() * P_MIN;
        lp = lp.constraint(row, Relation::Ge, -shift);
    }
    let mut total = vec![1.0; d];
    total.extend([0.0, 0.0]);
    lp = lp.constraint(total, Relation::Eq, d as f64 * (1.0 - P_MIN));
    let sol = lp.solve()?;
    let p = sol.x[..d].iter().map(|q| q + P_MIN).collect();
    Ok((p, sol.value))
}

/// Solves the weight-vector program; `None` when the optimum is `ρ ≤ 0`.
pub fn find_p(equilibria: &[BoundaryEquilibrium]) -> Result<Option<PersistenceCertificate>> {
    let d = equilibria
        .first()
        .map(|e| e.rates.len())
        .ok_or_else(|| Error::InvalidParameter("no equilibria to certify".into()))?;
    let (p, rho) = max_invasion_margin(equilibria, d)?;
    if !(rho > 0.0) {
        return Ok(None);
    }
    let cert = PersistenceCertificate {
        p,
        rho,
        equilibria: equilibria.to_vec(),
    };
    Ok(cert.verify().then_some(cert))
}

/// `H(x) = exp(−λ Σ pⱼ ln xⱼ)` with `λ = r / min p`; infinite on the
/// boundary.
pub fn lyapunov_h(x: &[f64], p: &[f64], r: f64) -> f64 {
    if x.iter().any(|&v| !(v > 0.0)) {
        return f64::INFINITY;
    }
    let pmin = p.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda = r / pmin;
    let v: f64 = p.iter().zip(x).map(|(pj, xj)| pj * ln(*xj)).sum();
    exp(-lambda * v)
}

/// Euclidean distance from `x` to the boundary within the simplex plane.
pub fn boundary_distance(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let m = x.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    m * sqrt(d / (d - 1.0))
}

/// Counts how often states fall in `Ext(ε) = {x : minᵢ xᵢ < ε}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupation {
    pub eps: Vec<f64>,
    pub hits: Vec<u64>,
    pub total: u64,
}

impl Occupation {
    pub fn new(eps: &[f64]) -> Self {
        Self {
            eps: eps.to_vec(),
            hits: vec![0; eps.len()],
            total: 0,
        }
    }

    pub fn record(&mut self, x: &[f64]) {
        let m = x.iter().copied().fold(f64::INFINITY, f64::min);
        for (h, &e) in self.hits.iter_mut().zip(&self.eps) {
            if m < e {
                *h += 1;
            }
        }
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Occupation) {
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
        self.total += other.total;
    }

    /// `(ε, fraction)` pairs.
    pub fn fractions(&self) -> Vec<(f64, f64)> {
        let t = self.total.max(1) as f64;
        self.eps
            .iter()
            .zip(&self.hits)
            .map(|(&e, &h)| (e, h as f64 / t))
            .collect()
    }
}

/// Fraction of states in `Ext(ε)` for each `ε`.
pub fn occupation_ext<'a, I>(states: I, eps: &[f64]) -> Result<Vec<(f64, f64)>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut occ = Occupation::new(eps);
    for x in states {
        occ.record(x);
    }
    if occ.total == 0 {
        return Err(Error::EmptySample);
    }
    Ok(occ.fractions())
}

/// Least-squares fit of `Ĥₖ₊₁ = α̂Ĥₖ + Ĉ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub points: usize,
    /// The windowed series was constant; `α̂ = 0` and `Ĉ` is its value.
    pub zero_variance: bool,
}

impl DriftReport {
    pub fn contracting(&self) -> bool {
        self.alpha_hat < 1.0
    }
}

/// Average of `min(H(xᵢ), cap)` over a population.
pub fn capped_mean_h<'a, I>(states: I, p: &[f64], r: f64, cap: f64) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let (mut sum, mut n) = (0.0, 0usize);
    for x in states {
        sum += lyapunov_h(x, p, r).min(cap);
        n += 1;
    }
    sum / n.max(1) as f64
}

/// Averages `series` over consecutive blocks of `window` entries and fits
/// the one-step affine recursion.
pub fn drift_fit(series: &[f64], window: usize) -> Result<DriftReport> {
    let window = window.max(1);
    let blocks: Vec<f64> = series
        .chunks_exact(window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect();
    if blocks.len() < 3 {
        return Err(Error::InsufficientData(alloc::format!(
            "need at least 3 windows, got {}",
            blocks.len()
        )));
    }
    let xs = &blocks[..blocks.len() - 1];
    let ys = &blocks[1..];
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let scale = mx.abs().max(1e-300);
    if sxx <= 1e-24 * scale * scale * n {
        return Ok(DriftReport {
            alpha_hat: 0.0,
            c_hat: my,
            points: blocks.len(),
            zero_variance: true,
        });
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha_hat = sxy / sxx;
    Ok(DriftReport {
        alpha_hat,
        c_hat: my - alpha_hat * mx,
        points: blocks.len(),
        zero_variance: false,
    })
}

/// Capped mean `H` per frame, then [`drift_fit`].
pub fn empirical_drift_check(
    frames: &[Vec<SimplexPoint>],
    p: &[f64],
    r: f64,
    window: usize,
    cap: f64,
) -> Result<DriftReport> {
    let series: Vec<f64> = frames
        .iter()
        .map(|f| capped_mean_h(f.iter().map(|x| x.coords()), p, r, cap))
        .collect();
    drift_fit(&series, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::ModelParams;

    #[test]
    fn ps1_boundary_is_vertices() {
        let p = ModelParams::ps1();
        let eq = face_equilibria(&p.payoff, p.sigma).unwrap();
        assert_eq!(eq.len(), 2);
        assert_eq!(eq[0].support, vec![0]);
        assert_eq!(eq[1].support, vec![1]);
        assert!((eq[1].rates[0] - 1.5).abs() < 1e-12);
        assert!((eq[0].rates[1] - 1.5).abs() < 1e-12);
        assert_eq!(eq[0].absent_rates(), vec![(1, eq[0].rates[1])]);
    }

    #[test]
    fn ps1_certificate() {
        let p = ModelParams::ps1();
        let eq = face_equilibria(&p.payoff, p.sigma).unwrap();
        let cert = find_p(&eq).unwrap().unwrap();
        assert!((cert.rho - 1.5).abs() < 1e-9);
        assert!((cert.p[0] - 1.0).abs() < 1e-9 && (cert.p[1] - 1.0).abs() < 1e-9);
        assert!(cert.verify());
    }

    #[test]
    fn dominated_strategy_has_no_certificate() {
        let a = PayoffMatrix::new(vec![vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let eq = face_equilibria(&a, 1.0).unwrap();
        assert!(find_p(&eq).unwrap().is_none());
        let (_, rho) = max_invasion_margin(&eq, 2).unwrap();
        assert!(rho < 0.0);
    }

    #[test]
    fn single_positive_equilibrium() {
        let e = BoundaryEquilibrium {
            support: vec![0],
            point: SimplexPoint::vertex(2, 0),
            rates: vec![0.0, 2.0],
        };
        let cert = find_p(&[e]).unwrap().unwrap();
        // all weight on the invading type: p₂ = 2 − 1e−6
        assert!((cert.rho - 2.0 * (2.0 - P_MIN)).abs() < 1e-9);
    }

    #[test]
    fn lyapunov_examples() {
        let c = [0.5, 0.5];
        assert!((lyapunov_h(&c, &[1.0, 1.0], 1.0) - 4.0).abs() < 1e-12);
        assert_eq!(lyapunov_h(&[1.0, 0.0], &[1.0, 1.0], 1.0), f64::INFINITY);
        let mut last = 0.0;
        for k in 0..20 {
            let t = 0.5 + 0.0249 * k as f64;
            let h = lyapunov_h(&[t, 1.0 - t], &[1.0, 1.0], 1.0);
            assert!(h >= last);
            last = h;
        }
        assert!((boundary_distance(&c) - 0.5 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn occupation_examples() {
        let states = vec![vec![0.3, 0.7]; 5];
        let f = occupation_ext(states.iter().map(|v| v.as_slice()), &[1.0, 0.2]).unwrap();
        assert_eq!(f, vec![(1.0, 1.0), (0.2, 0.0)]);
        assert!(occupation_ext(core::iter::empty(), &[0.1]).is_err());
    }

    #[test]
    fn drift_fit_cases() {
        let geometric: Vec<f64> = (0..40).map(|k| 4.0 + 0.9f64.powi(k)).collect();
        let r = drift_fit(&geometric, 1).unwrap();
        assert!((r.alpha_hat - 0.9).abs() < 1e-9);
        assert!((r.c_hat - 0.4).abs() < 1e-8);
        let flat = [4.0; 30];
        let r = drift_fit(&flat, 5).unwrap();
        assert!(r.zero_variance && r.alpha_hat == 0.0 && r.c_hat == 4.0);
        assert!(drift_fit(&[1.0, 2.0], 1).is_err());
    }
}
