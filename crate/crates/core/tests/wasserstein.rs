mod common;

use replicator_core::mckean_vlasov::DirichletParams;
use replicator_core::rng::{Domain, StreamKey};
use replicator_core::stats::{
    anderson_darling, coupled_was_estimate, dirichlet_was_bound, sample_beta, sample_gamma,
    wasserstein1_1d, DirichletCoupling, DEFAULT_LEVELS,
};

/// `∫₀¹ |F⁻¹(u) − G⁻¹(u)| du` by the midpoint rule on a fine grid of `u`.
fn quantile_grid_oracle(x: &[f64], y: &[f64], grid: usize) -> f64 {
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let q = |v: &[f64], u: f64| v[((u * v.len() as f64) as usize).min(v.len() - 1)];
    (0..grid)
        .map(|k| {
            let u = (k as f64 + 0.5) / grid as f64;
            (q(&xs, u) - q(&ys, u)).abs()
        })
        .sum::<f64>()
        / grid as f64
}

fn beta_draws(seed: u64, n: usize, a: f64, b: f64) -> Vec<f64> {
    let mut s = StreamKey::new(seed, Domain::Sampling).stream();
    (0..n).map(|_| sample_beta(a, b, &mut s)).collect()
}

#[test]
fn empirical_distance_matches_quantile_grid() {
    let x = beta_draws(1, 100_000, 0.55, 0.45);
    let y = beta_draws(2, 100_000, 0.45, 0.55);
    let w = wasserstein1_1d(&x, &y).unwrap();
    assert!((w - quantile_grid_oracle(&x, &y, 1_000_000)).abs() < 1e-3);
    // The laws are stochastically ordered, so the population distance is the
    // difference of means, 0.1; the sampling SE is about 1.6e-3.
    assert!((w - 0.1).abs() < 8e-3, "{w}");
    let z = beta_draws(3, 80_000, 0.45, 0.55);
    let w = wasserstein1_1d(&x, &z).unwrap();
    assert!((w - quantile_grid_oracle(&x, &z, 4_000_000)).abs() < 1e-3);
}

#[test]
fn coupling_respects_bound_for_the_binary_example() {
    let a = DirichletParams::beta(0.6, 0.4).unwrap();
    let b = DirichletParams::beta(0.5, 0.5).unwrap();
    let est = coupled_was_estimate(&a, &b, 100, 100_000, 3).unwrap();
    assert!((est.bound - dirichlet_was_bound(&a, &b).unwrap()).abs() < 1e-12);
    assert!(est.within(3.0), "{est:?}");
}

#[test]
fn coupling_marginal_passes_anderson_darling() {
    let a = DirichletParams::beta(0.6, 0.4).unwrap();
    let b = DirichletParams::beta(0.5, 0.5).unwrap();
    let c = DirichletCoupling::new(&a, &b, 100).unwrap();
    let mut s = StreamKey::new(4, Domain::Coupling).stream();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..100_000)
        .map(|_| {
            let (x, y) = c.sample(&mut s);
            (x[0], y[0])
        })
        .unzip();
    let rx = anderson_darling(&xs, 0.6, 0.4, 1000, 4, &DEFAULT_LEVELS).unwrap();
    let ry = anderson_darling(&ys, 0.5, 0.5, 1000, 4, &DEFAULT_LEVELS).unwrap();
    assert_eq!(rx.rejects_at(0.99), Some(false), "{rx:?}");
    assert_eq!(ry.rejects_at(0.99), Some(false), "{ry:?}");
}

/// The construction with `N` separate `Gamma(1/N)` variables, summed in
/// blocks.
fn naive_pair(m: &[u64], n: &[u64], s: &mut replicator_core::rng::Stream) -> (Vec<f64>, Vec<f64>) {
    let total: u64 = m.iter().sum();
    let g: Vec<f64> = (0..total)
        .map(|_| sample_gamma(1.0 / total as f64, s))
        .collect();
    let sum: f64 = g.iter().sum();
    let blocks = |c: &[u64]| {
        let mut start = 0usize;
        c.iter()
            .map(|&k| {
                let v = g[start..start + k as usize].iter().sum::<f64>() / sum;
                start += k as usize;
                v
            })
            .collect::<Vec<f64>>()
    };
    (blocks(m), blocks(n))
}

#[test]
fn aggregated_segments_match_naive_construction_in_law() {
    let (m, n) = (vec![3u64, 4, 3], vec![5u64, 2, 3]);
    let c = DirichletCoupling::from_counts(m.clone(), n.clone()).unwrap();
    let reps = 100_000;
    let mut s1 = StreamKey::new(5, Domain::Coupling).stream();
    let mut s2 = StreamKey::new(6, Domain::Coupling).stream();
    let mut fast = [0.0; 3];
    let mut slow = [0.0; 3];
    let mut fast_sq = [0.0; 3];
    let mut slow_sq = [0.0; 3];
    for _ in 0..reps {
        let (x, y) = c.sample(&mut s1);
        let (u, v) = naive_pair(&m, &n, &mut s2);
        // Statistics: coupled cost, X₁·Y₁, and |X₂ − Y₂|.
        let f = [
            x.coords()
                .iter()
                .zip(y.coords())
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>(),
            x[0] * y[0],
            (x[1] - y[1]).abs(),
        ];
        let g = [
            u.iter().zip(&v).map(|(p, q)| (p - q).abs()).sum::<f64>(),
            u[0] * v[0],
            (u[1] - v[1]).abs(),
        ];
        for k in 0..3 {
            fast[k] += f[k];
            slow[k] += g[k];
            fast_sq[k] += f[k] * f[k];
            slow_sq[k] += g[k] * g[k];
        }
    }
    let r = reps as f64;
    for k in 0..3 {
        let (mf, ms) = (fast[k] / r, slow[k] / r);
        let vf = fast_sq[k] / r - mf * mf;
        let vs = slow_sq[k] / r - ms * ms;
        let se = ((vf + vs) / r).sqrt();
        assert!((mf - ms).abs() < 4.0 * se, "statistic {k}: {mf} vs {ms}");
    }
}

#[test]
fn random_pairs_respect_bound() {
    let mut s = StreamKey::new(7, Domain::Sampling).stream();
    for d in [2usize, 3, 5] {
        for k in 0..10 {
            let draw = |s: &mut replicator_core::rng::Stream| {
                let raw: Vec<f64> = (0..d).map(|_| 0.05 + s.uniform_open()).collect();
                let t: f64 = raw.iter().sum();
                DirichletParams::new(raw.into_iter().map(|v| v / t).collect()).unwrap()
            };
            let a = draw(&mut s);
            let b = draw(&mut s);
            let est = coupled_was_estimate(&a, &b, 10_000, 5_000, 100 + k).unwrap();
            assert!(est.within(3.0), "d={d}: {est:?}");
        }
    }
}
