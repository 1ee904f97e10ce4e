use proptest::prelude::*;

use replicator_core::mckean_vlasov::DirichletParams;
use replicator_core::persistence::{find_p, occupation_ext, BoundaryEquilibrium};
use replicator_core::sde::{em_step, log_abundance_step, IntegratorConfig};
use replicator_core::simplex::{project_tangent, ModelParams, PayoffMatrix, SimplexPoint};
use replicator_core::stats::{
    anderson_darling_statistic, dirichlet_was_bound, reg_inc_beta, tn_statistic, wasserstein1_1d,
};

fn weights(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, d)
}

fn payoff(d: usize) -> impl Strategy<Value = PayoffMatrix> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), d)
        .prop_map(|rows| PayoffMatrix::new(rows).unwrap())
}

fn valid(x: &SimplexPoint) -> bool {
    x.coords().iter().all(|&v| v >= 0.0 && v.is_finite())
        && (x.coords().iter().sum::<f64>() - 1.0).abs() < 1e-12
}

proptest! {
    #[test]
    fn normalized_weights_form_a_simplex_point(w in weights(4)) {
        let x = SimplexPoint::from_weights(w).unwrap();
        prop_assert!(valid(&x));
    }

    #[test]
    fn tangent_projection_sums_to_zero(w in weights(5), f in prop::collection::vec(-10.0f64..10.0, 5)) {
        let x = SimplexPoint::from_weights(w).unwrap();
        let v = project_tangent(&f, &x).unwrap();
        prop_assert!(v.sum().abs() < 1e-12);
    }

    #[test]
    fn euler_steps_stay_in_simplex(
        a in payoff(3),
        w in weights(3),
        sigma in 0.05f64..3.0,
        delta in 0.0f64..1.0,
        dw in prop::collection::vec(-2.0f64..2.0, 3),
        m in weights(3),
    ) {
        let params = ModelParams::with_standard_interaction(a, sigma, delta).unwrap();
        let x = SimplexPoint::from_weights(w).unwrap();
        let m = SimplexPoint::from_weights(m).unwrap();
        let cfg = IntegratorConfig::default();
        let y = em_step(&x, &params, Some(m.coords()), &dw, &cfg).unwrap();
        prop_assert!(valid(&y));
        let logs: Vec<f64> = x.coords().iter().map(|v| v.ln()).collect();
        let (_, z) = log_abundance_step(&logs, &params, Some(m.coords()), &dw, &cfg).unwrap();
        prop_assert!(valid(&z));
    }

    #[test]
    fn tn_nonnegative_and_order_free(
        mut y in prop::collection::vec(0.0f64..=1.0, 1..60),
        a in 0.1f64..4.0,
        b in 0.1f64..4.0,
    ) {
        let t = tn_statistic(&y, a, b).unwrap();
        prop_assert!(t >= 0.0);
        y.reverse();
        let r = tn_statistic(&y, a, b).unwrap();
        prop_assert!((t - r).abs() <= 1e-10 * (1.0 + t));
    }

    #[test]
    fn ad_is_order_free(mut y in prop::collection::vec(0.001f64..0.999, 8..50)) {
        let t = anderson_darling_statistic(&y, 0.5263, 0.4737).unwrap();
        y.reverse();
        prop_assert!((t - anderson_darling_statistic(&y, 0.5263, 0.4737).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn incomplete_beta_is_monotone(x1 in 0.0f64..=1.0, x2 in 0.0f64..=1.0, a in 0.05f64..20.0, b in 0.05f64..20.0) {
        let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        prop_assert!(reg_inc_beta(lo, a, b) <= reg_inc_beta(hi, a, b) + 1e-14);
        prop_assert_eq!(reg_inc_beta(0.0, a, b), 0.0);
        prop_assert_eq!(reg_inc_beta(1.0, a, b), 1.0);
    }

    #[test]
    fn wasserstein_is_a_symmetric_translation_equivariant_distance(
        x in prop::collection::vec(-5.0f64..5.0, 1..40),
        y in prop::collection::vec(-5.0f64..5.0, 1..40),
        c in -3.0f64..3.0,
    ) {
        let w = wasserstein1_1d(&x, &y).unwrap();
        prop_assert!(w >= 0.0);
        prop_assert!((w - wasserstein1_1d(&y, &x).unwrap()).abs() < 1e-12);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        prop_assert!((wasserstein1_1d(&x, &shifted).unwrap() - c.abs()).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_bound_vanishes_only_on_the_diagonal(a in weights(4), b in weights(4)) {
        let norm = |v: Vec<f64>| {
            let t: f64 = v.iter().sum();
            DirichletParams::new(v.into_iter().map(|x| x / t).collect()).unwrap()
        };
        let (a, b) = (norm(a), norm(b));
        prop_assert_eq!(dirichlet_was_bound(&a, &a).unwrap(), 0.0);
        let v = dirichlet_was_bound(&a, &b).unwrap();
        prop_assert!(v >= 0.0);
        if v == 0.0 {
            prop_assert!(a.as_slice()[..3] == b.as_slice()[..3]);
        }
    }

    #[test]
    fn certificates_survive_independent_recheck(
        rates in prop::collection::vec(prop::collection::vec(-2.0f64..3.0, 3), 1..6),
    ) {
        let eq: Vec<BoundaryEquilibrium> = rates
            .into_iter()
            .map(|r| BoundaryEquilibrium {
                support: vec![0],
                point: SimplexPoint::vertex(3, 0),
                rates: r,
            })
            .collect();
        if let Some(cert) = find_p(&eq).unwrap() {
            prop_assert!(cert.rho > 0.0);
            prop_assert!(cert.p.iter().all(|&p| p >= 1e-6 - 1e-12));
            for e in &eq {
                let v: f64 = cert.p.iter().zip(&e.rates).map(|(p, h)| p * h).sum();
                prop_assert!(v >= cert.rho - 1e-9);
            }
        } else {
            // No weight vector does better than zero: check p on a coarse grid.
            for i in 0..=20 {
                for j in 0..=(20 - i) {
                    let p = [i as f64, j as f64, (20 - i - j) as f64].map(|v| 3.0 * v / 20.0);
                    let worst = eq
                        .iter()
                        .map(|e| p.iter().zip(&e.rates).map(|(p, h)| p * h).sum::<f64>())
                        .fold(f64::INFINITY, f64::min);
                    prop_assert!(worst <= 1e-6 * 3.0 * 3.0);
                }
            }
        }
    }

    #[test]
    fn occupation_fraction_monotone(
        xs in prop::collection::vec(0.0f64..=1.0, 1..50),
        mut eps in prop::collection::vec(0.0f64..=1.0, 1..6),
    ) {
        eps.sort_by(|a, b| b.total_cmp(a));
        let states: Vec<[f64; 2]> = xs.iter().map(|&v| [v, 1.0 - v]).collect();
        let f = occupation_ext(states.iter().map(|s| s.as_slice()), &eps).unwrap();
        prop_assert!(f.windows(2).all(|w| w[1].1 <= w[0].1));
    }
}
