//! Small dense linear algebra and thin wrappers over `libm`.
//!
//! Everything transcendental goes through `libm` so results do not depend on
//! the platform's libc or on whether `std` is linked.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Pivots with magnitude below this are treated as zero.
pub(crate) const PIVOT_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `m · x = rhs` for a square row-major matrix by Gaussian elimination
/// with partial pivoting.
///
/// Returns [`Error::SingularSystem`] when a pivot falls below `1e-12`.
#[allow(clippy::needless_range_loop)]
pub fn solve_linear(m: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: m.len(),
        });
    }
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (row, &b) in m.iter().zip(rhs) {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: row.len(),
            });
        }
        let mut r = row.clone();
        r.push(b);
        a.push(r);
    }

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot_row][col].abs() < PIVOT_EPS {
            return Err(Error::SingularSystem);
        }
        a.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..=n {
                a[row][k] -= factor * a[col][k];
            }
        }
    }

    let mut x = alloc::vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][n] - tail) / a[row][row];
    }
    Ok(x)
}
