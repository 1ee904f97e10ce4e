#![allow(dead_code)]

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `∫₀ˣ t^{a−1}(1 − t)^{b−1} dt` by quadrature after removing the endpoint
/// singularities with `t = u^{1/a}` (and the mirror substitution above 1/2).
pub fn incomplete_beta_integral(x: f64, a: f64, b: f64) -> f64 {
    let lower = |upper: f64, p: f64, q: f64| {
        let f = |u: f64| (1.0 - u.powf(1.0 / p)).powf(q - 1.0);
        integrate(&f, 0.0, upper.powf(p), 1e-15) / p
    };
    if x <= 0.5 {
        lower(x, a, b)
    } else {
        let head = lower(0.5, a, b);
        let tail = lower(0.5, b, a) - lower(1.0 - x, b, a);
        head + tail
    }
}

pub fn beta_function(a: f64, b: f64) -> f64 {
    incomplete_beta_integral(1.0, a, b)
}

/// `I_x(a, b)` by quadrature.
pub fn reg_inc_beta_oracle(x: f64, a: f64, b: f64) -> f64 {
    incomplete_beta_integral(x, a, b) / beta_function(a, b)
}

/// `n ∫₀¹ (S(t) − g(t))² dt` by quadrature on each segment where the
/// empirical term is constant.
pub fn tn_oracle(sample: &[f64], a: f64, b: f64) -> f64 {
    let n = sample.len() as f64;
    let beta = beta_function(a, b);
    let mut y = sample.to_vec();
    y.sort_by(f64::total_cmp);
    let mut knots = vec![0.0];
    knots.extend(&y);
    knots.push(1.0);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let s: f64 = y
            .iter()
            .filter(|&&v| v >= mid)
            .map(|&v| (a + b) * v - a)
            .sum::<f64>()
            / n;
        let f = |t: f64| {
            let g = t.powf(a) * (1.0 - t).powf(b) / beta;
            (s - g) * (s - g)
        };
        total += integrate(&f, lo, hi, 1e-14);
    }
    n * total
}

/// Kolmogorov distance between a sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn mean_and_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var)
}
