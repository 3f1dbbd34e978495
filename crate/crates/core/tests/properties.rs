use lancaster_core::correlation::{self, DiscretizedJoint};
use lancaster_core::lancaster::{self, LancasterModel};
use lancaster_core::orthopoly::{self, MarginalSpec};
use lancaster_core::regression;
use proptest::prelude::*;

fn marginal(k: u8) -> MarginalSpec {
    match k % 4 {
        0 => MarginalSpec::uniform(0.0, 1.0).unwrap(),
        1 => MarginalSpec::beta(0.0, 1.0, 2.0, 3.0).unwrap(),
        2 => MarginalSpec::beta(-1.0, 1.0, 2.0, 2.0).unwrap(),
        _ => MarginalSpec::uniform(-2.0, 3.0).unwrap(),
    }
}

/// Directions in coefficient space, rescaled onto the admissible set.
fn model_strategy() -> impl Strategy<Value = LancasterModel> {
    (
        any::<u8>(),
        any::<u8>(),
        prop::collection::vec(-1.0f64..1.0, 1..=5),
        0.05f64..0.98,
    )
        .prop_map(|(kx, ky, raw, target)| {
            let (mx, my) = (marginal(kx), marginal(ky));
            let sx = orthopoly::build_system(&mx, 8, 128).unwrap();
            let sy = orthopoly::build_system(&my, 8, 128).unwrap();
            let (c, d) = (sx.bound_constants(), sy.bound_constants());
            let bound: f64 = raw
                .iter()
                .enumerate()
                .map(|(k, r)| r.abs() * c[k] * d[k])
                .sum();
            let scale = if bound > 0.0 { target / bound } else { 0.0 };
            let rho: Vec<f64> = raw.iter().map(|r| r * scale).collect();
            LancasterModel::build(mx, my, 8, &rho).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn eigen_regressions_hold(m in model_strategy()) {
        for n in 1..=m.coeffs().len() + 1 {
            let pair = regression::check_eigen_regression(&m, n).unwrap();
            prop_assert!(pair.max_residual() <= 1e-8, "n={} residual {}", n, pair.max_residual());
        }
    }

    #[test]
    fn spectrum_is_coefficient_magnitudes(m in model_strategy()) {
        let j = DiscretizedJoint::from_model(&m, 80).unwrap();
        let sv = correlation::maxcorr_svd(&j).unwrap().spectrum;
        let mut expected: Vec<f64> = m.coeffs().rho().iter().map(|r| r.abs()).collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        prop_assert!((sv[0] - 1.0).abs() < 1e-6);
        for (k, e) in expected.iter().enumerate() {
            prop_assert!((sv[k + 1] - e).abs() < 1e-3, "sv[{}]={} vs {}", k + 1, sv[k + 1], e);
        }
        prop_assert!(sv[expected.len() + 1] < 1e-3);
    }

    #[test]
    fn marginals_recovered_and_density_nonnegative(m in model_strategy()) {
        let (rx, ry) = m.marginal_residual().unwrap();
        prop_assert!(rx <= 1e-9 && ry <= 1e-9, "{} {}", rx, ry);
        prop_assert!(m.min_density_on_grid(256) >= 0.0);
        prop_assert!((m.total_mass().unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn cross_moments_are_diagonal(m in model_strategy()) {
        for a in 0..=4 {
            for b in 0..=4 {
                let expected = if a == b { m.coeffs().get(a) } else { 0.0 };
                let got = m.cross_moment(a, b).unwrap();
                prop_assert!((got - expected).abs() <= 1e-9, "E[phi{} psi{}] = {}", a, b, got);
            }
        }
    }

    #[test]
    fn pearson_is_first_coefficient(m in model_strategy()) {
        let j = DiscretizedJoint::from_model(&m, 64).unwrap();
        let p = correlation::pearson(&j).unwrap();
        prop_assert!((p - m.coeffs().get(1)).abs() <= 1e-6, "{} vs {}", p, m.coeffs().get(1));
    }

    #[test]
    fn leading_coefficients_match(m in model_strategy()) {
        for n in 1..=m.coeffs().len().min(5) {
            let pair = regression::check_polynomial_regression(&m, n).unwrap();
            prop_assert!(pair.max_leading_error() <= 1e-7, "n={} err {}", n, pair.max_leading_error());
        }
    }

    #[test]
    fn linear_builder_admissible(n in 1usize..=8, frac in 0.0f64..=1.0) {
        let u = MarginalSpec::uniform(0.0, 1.0).unwrap();
        let s = orthopoly::build_system(&u, 8, 128).unwrap();
        let c = s.bound_constants();
        let lam = frac * lancaster::max_linear_lambda(c, c, n);
        let seq = lancaster::build_sequence_linear(c, c, n, lam).unwrap();
        prop_assert!(seq.bound_value() <= 1.0 + 1e-12);
        let m = LancasterModel::build(u.clone(), u, 8, seq.rho()).unwrap();
        prop_assert!(m.min_density_on_grid(128) >= 0.0);
    }
}

#[test]
fn mismatched_pairing_breaks_marginals() {
    let u = MarginalSpec::uniform(0.0, 1.0).unwrap();
    let m = LancasterModel::build(u.clone(), u, 8, &[0.05, 0.15])
        .unwrap()
        .with_mismatched_pairing();
    let (rx, ry) = m.marginal_residual().unwrap();
    assert!(rx.max(ry) > 1e-3);
}

#[test]
fn fgm_has_no_gap() {
    let u = MarginalSpec::uniform(0.0, 1.0).unwrap();
    for r in [-0.3, 0.1, 0.3] {
        let m = LancasterModel::build(u.clone(), u.clone(), 8, &[r]).unwrap();
        let rep = regression::counterexample_report(
            &m,
            regression::ReportOptions {
                grid: 64,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rep.correlation.gap.abs() < 2e-3);
        assert!(!rep.counterexample);
        assert!(rep.all_checks_pass(), "{:?}", rep.checks);
    }
}

#[test]
fn models_on_the_bound_keep_exact_spectrum() {
    let u = MarginalSpec::uniform(0.0, 1.0).unwrap();
    for rho in [vec![1.0 / 3.0], vec![0.0, 0.2], vec![0.1, 0.14]] {
        let m = LancasterModel::build(u.clone(), u.clone(), 8, &rho).unwrap();
        assert!((m.coeffs().bound_value() - 1.0).abs() < 1e-12);
        assert!(m.min_density_on_grid(256) >= 0.0);
        let j = DiscretizedJoint::from_model(&m, 200).unwrap();
        let s = correlation::maxcorr_svd(&j).unwrap();
        let top = rho.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        assert!((s.r - top).abs() < 1e-9, "{} vs {}", s.r, top);
    }
}
