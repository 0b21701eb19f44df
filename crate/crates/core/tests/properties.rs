use std::f64::consts::PI;
use std::sync::OnceLock;

use dampwave::attractor::{product_distance, semidistance, AttractorPoint, AttractorSample, ProductNorm, Provenance};
use dampwave::linearized::{energy, z_norm_sq, ZLevel};
use dampwave::nonlinearity::NonlinearitySpec;
use dampwave::operator::{build_model, check_shift_inequalities, CoefficientField, DomainSpec, Field, SpectralModel};
use dampwave::semiflow::{integrate, linear_semigroup_step, lyapunov, mode_exp, RunOptions, StatePair};
use proptest::prelude::*;

const N: usize = 12;

fn model() -> &'static SpectralModel {
    static M: OnceLock<SpectralModel> = OnceLock::new();
    M.get_or_init(|| {
        let d = DomainSpec::interval(PI, 64, N);
        build_model(&d, &CoefficientField::constant(&d, 1.0, 0.0)).unwrap()
    })
}

fn field() -> impl Strategy<Value = Field> {
    prop::collection::vec(-2.0..2.0f64, N).prop_map(Field::from_coeffs)
}

fn state(eps: f64) -> impl Strategy<Value = StatePair> {
    (field(), field()).prop_map(move |(u, v)| StatePair::new(u, v, eps))
}

fn cloud(points: Vec<StatePair>, eps: f64) -> AttractorSample {
    AttractorSample {
        eps,
        points: points
            .into_iter()
            .map(|state| AttractorPoint {
                state,
                provenance: Provenance::Ensemble,
            })
            .collect(),
        r: 0.0,
        gamma_diagnostics: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn norm_ladder_holds_for_any_shift(u in field(), theta in 0.0..500.0f64) {
        let m = model();
        let r = check_shift_inequalities(m, m.lambda1(), theta, &[u], 1e-12);
        prop_assert!(r.passed(), "{:?}", r.violations);
    }

    #[test]
    fn energy_is_sandwiched_by_the_squared_norm(
        s in state(1.0),
        eps in 0.01..2.0f64,
        theta in 0.0..100.0f64,
        z0 in any::<bool>(),
    ) {
        let m = model();
        let s = StatePair::new(s.u, s.v, eps);
        let level = if z0 { ZLevel::Z0 } else { ZLevel::Zm1 };
        let delta = 0.5f64.min(m.lambda1() / 2.0);
        let e = energy(m, &s.u.coeffs, &s.v.coeffs, eps, theta, delta, level, None).unwrap();
        let n2 = z_norm_sq(m, &s, theta, level);
        prop_assert!(e >= 0.25 * n2 * (1.0 - 1e-12) && e <= 0.75 * n2 * (1.0 + 1e-12), "{} vs {}", e, n2);
    }

    #[test]
    fn linear_flow_is_a_semigroup(s in state(1.0), eps in 0.02..2.0f64, t1 in 0.0..3.0f64, t2 in 0.0..3.0f64) {
        let m = model();
        let s = StatePair::new(s.u, s.v, eps);
        let a = linear_semigroup_step(m, &linear_semigroup_step(m, &s, 0.0, t1), 0.0, t2);
        let b = linear_semigroup_step(m, &s, 0.0, t1 + t2);
        let scale = 1.0 + s.u.coeffs.norm() + s.v.coeffs.norm();
        prop_assert!((a.u.coeffs - b.u.coeffs).norm() + (a.v.coeffs - b.v.coeffs).norm() <= 1e-11 * scale);
    }

    #[test]
    fn linear_flow_energy_never_grows(s in state(1.0), eps in 0.02..2.0f64, t in 0.0..5.0f64) {
        let m = model();
        let s = StatePair::new(s.u, s.v, eps);
        let out = linear_semigroup_step(m, &s, 0.0, t);
        prop_assert!(out.energy_norm_sq(m) <= s.energy_norm_sq(m) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn mode_propagator_has_the_right_determinant(eps in 0.01..3.0f64, mu in 0.0..50.0f64, t in 0.0..4.0f64) {
        // det e^{tB} = e^{t tr B} with tr B = −1/ε.
        let det = mode_exp(eps, mu, t).determinant();
        let expect = (-t / eps).exp();
        prop_assert!((det - expect).abs() <= 1e-9 * (1.0 + expect), "{} vs {}", det, expect);
    }

    #[test]
    fn product_distance_is_a_metric(a in state(1.0), b in state(1.0), c in state(1.0)) {
        let m = model();
        for norm in [ProductNorm::H1L2, ProductNorm::H1Hm1] {
            let d = |x: &StatePair, y: &StatePair| product_distance(m, x, y, norm);
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-12 * (1.0 + d(&a, &b)));
            prop_assert!(d(&a, &c) <= (d(&a, &b) + d(&b, &c)) * (1.0 + 1e-12));
        }
        prop_assert!(product_distance(m, &a, &b, ProductNorm::H1Hm1) <= product_distance(m, &a, &b, ProductNorm::H1L2) * (1.0 + 1e-12));
    }

    #[test]
    fn semidistance_of_a_subset_is_zero(points in prop::collection::vec(state(1.0), 2..8), k in 1usize..8) {
        let m = model();
        let k = k.min(points.len());
        let whole = cloud(points.clone(), 1.0);
        let part = cloud(points[..k].to_vec(), 1.0);
        prop_assert_eq!(semidistance(m, &part, &whole, ProductNorm::H1L2).unwrap(), 0.0);
        let back = semidistance(m, &whole, &part, ProductNorm::H1L2).unwrap();
        let direct = points
            .iter()
            .map(|y| points[..k].iter().map(|z| product_distance(m, y, z, ProductNorm::H1L2)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        prop_assert!((back - direct).abs() <= 1e-12 * (1.0 + direct));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lyapunov_functional_is_nonincreasing(u in field(), eps in 0.1..1.5f64) {
        let m = model();
        let f = NonlinearitySpec::chafee_infante();
        let u = u.scaled(0.5);
        let tr = integrate(m, &f, &StatePair::new(u, m.zero_field(), eps), &RunOptions::new(0.005, 2.0).record_every(4)).unwrap();
        let ls: Vec<f64> = tr.states.iter().map(|s| lyapunov(m, &f, s)).collect();
        let scale = 1.0 + ls[0].abs();
        prop_assert!(ls.windows(2).all(|w| w[1] <= w[0] + 1e-6 * scale), "{:?}", ls);
    }
}
