mod common;

use std::collections::BTreeMap;

use carnot_singular::free_lie::{build_free_algebra, DualCovector};
use carnot_singular::quadratic_r2s5::*;
use carnot_singular::scalar::{rat, rat_int, Scalar};
use carnot_singular::strata::{system_of, CaseKind, CaseTag};
use common::Q;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(pairs: &[(&str, Q)]) -> QuadraticParams {
    QuadraticParams::new(&pairs.iter().map(|(w, v)| (w.to_string(), v.clone())).collect()).unwrap()
}

/// Integration horizon short enough that random parameters stay bounded.
const HORIZON: f64 = 0.5;

fn generic() -> QuadraticParams {
    params(&[
        ("212", rat(1, 1)),
        ("112", rat(-1, 2)),
        ("2112", rat(1, 3)),
        ("2212", rat(-2, 3)),
        ("1112", rat(1, 1)),
        ("21212", rat(1, 2)),
        ("22112", rat(1, 2)),
        ("22212", rat(-1, 1)),
        ("11112", rat(2, 1)),
        ("21112", rat(-1, 4)),
        ("(12)(112)", rat(1, 2)),
        ("11212", rat(1, 4)),
        ("(12)(212)", rat(3, 2)),
    ])
}

#[test]
fn straight_line_drift() {
    let p = params(&[("112", rat_int(1))]);
    let z0 = HeisenbergState { z1: 0.75, z2: 0.5, theta: -1.0 };
    let tr = integrate(&p, z0, 2.0, 0.125, DEFAULT_BLOWUP).unwrap();
    for (t, s) in tr.times.iter().zip(&tr.states) {
        assert!((s.z1 - 0.75).abs() < 1e-14);
        assert!((s.z2 - (0.5 - t)).abs() < 1e-14);
        assert!((s.theta - (-1.0 - 0.75 * t)).abs() < 1e-14);
    }
}

#[test]
fn linear_part_matches_step_four_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let alg4 = build_free_algebra(2, 4).unwrap();
    for _ in 0..10 {
        let p = QuadraticParams::random(&mut rng, 2);
        let words = ["212", "112", "2112", "2212", "1112"];
        let mut pairs: Vec<(&str, BigRational)> = vec![("1", rat_int(0)), ("2", rat_int(0)), ("12", rat_int(0))];
        pairs.extend(words.iter().map(|w| (*w, p.get(w).unwrap().clone())));
        let l4 = DualCovector::from_word_values(&alg4, &pairs).unwrap();
        let sys = system_of(&l4, CaseTag::new(CaseKind::R2S4, true)).unwrap();
        let (m, v) = p.linear_part();
        for i in 0..2 {
            assert_eq!(v[i], sys.v[i].to_f64());
            for j in 0..2 {
                assert_eq!(m[i][j], sys.m[(i, j)].to_f64());
            }
        }
    }
}

#[test]
fn relation_violations_rejected() {
    for bad in [
        vec![("22112", rat_int(1))],
        vec![("11212", rat_int(1)), ("21112", rat_int(2))],
        vec![("21212", rat_int(1)), ("22112", rat_int(-1))],
    ] {
        let m: BTreeMap<String, Q> = bad.into_iter().map(|(w, v)| (w.to_string(), v)).collect();
        assert!(QuadraticParams::new(&m).is_err());
    }
}

#[test]
fn unknown_word_rejected() {
    let m: BTreeMap<String, Q> = [("1212".to_string(), rat_int(1))].into_iter().collect();
    assert!(QuadraticParams::new(&m).is_err());
}

#[test]
fn fourth_order() {
    let order = richardson_order(&generic(), HeisenbergState::ORIGIN, 1.0, 0.05).unwrap();
    assert!((order - 4.0).abs() <= 0.3, "order {order}");
}

#[test]
fn theta_matches_area_integral() {
    let p = generic();
    for dt in [0.05, 0.025, 0.0125] {
        let tr = integrate(&p, HeisenbergState::ORIGIN, 1.0, dt, DEFAULT_BLOWUP).unwrap();
        assert!(!tr.blown_up);
        let err = theta_consistency(&tr, &p);
        assert!(err <= 10.0 * dt.powi(4) * 1.0, "dt {dt}: {err}");
    }
}

#[test]
fn integro_form_agrees() {
    let p = generic();
    for dt in [0.05, 0.025, 0.0125] {
        let a = integrate(&p, HeisenbergState::ORIGIN, 1.0, dt, DEFAULT_BLOWUP).unwrap();
        let b = integrate_integro(&p, [0.0, 0.0], 1.0, dt, DEFAULT_BLOWUP).unwrap();
        assert_eq!(a.states.len(), b.states.len());
        let diff = a
            .states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| (x.z1 - y.z1).abs().max((x.z2 - y.z2).abs()).max((x.theta - y.theta).abs()))
            .fold(0.0, f64::max);
        assert!(diff <= 10.0 * dt.powi(4), "dt {dt}: {diff}");
    }
}

#[test]
fn drift_only_certifies_exactly() {
    let p = params(&[("212", rat_int(1))]);
    let tr = integrate(&p, HeisenbergState::ORIGIN, 1.0, 0.125, DEFAULT_BLOWUP).unwrap();
    let row = certify::<Q>(&p, None, &tr).unwrap();
    assert!(row.exact_zero);
    assert_eq!(row.residual, 0.0);
}

#[test]
fn residual_vanishes_under_refinement() {
    let rep = refinement_study(&generic(), None, 1.0, &[0.1, 0.05, 0.025, 0.0125]).unwrap();
    assert!(rep.rows.windows(2).all(|w| w[1].residual < w[0].residual), "{rep:?}");
    assert!(rep.order_estimate.unwrap() >= 1.0, "{rep:?}");
}

#[test]
fn override_covector_breaks_certificate() {
    let p = generic();
    let alg = build_free_algebra(2, 5).unwrap();
    let mut lambda = p.covector(&alg).unwrap();
    let own = refinement_study(&p, Some(&lambda), 1.0, &[0.025]).unwrap();
    let j = alg.layer_range(5).start;
    lambda.coords[j] = lambda.coords[j].clone() + rat_int(3);
    let other = refinement_study(&p, Some(&lambda), 1.0, &[0.025]).unwrap();
    assert!(other.rows[0].residual > 100.0 * own.rows[0].residual);
}

#[test]
fn blow_up_is_flagged() {
    let p = params(&[("212", rat_int(1)), ("11212", rat_int(1)), ("(12)(112)", rat_int(1))]);
    let tr = integrate(&p, HeisenbergState { z1: 1.0, z2: 1.0, theta: 0.0 }, 50.0, 0.01, 1e3).unwrap();
    assert!(tr.blown_up);
    assert!(tr.end().norm() <= 1e3);
}

#[test]
fn equilibrium_search_is_not_certified() {
    let p = params(&[("212", rat_int(1)), ("2112", rat_int(1)), ("1112", rat_int(-1))]);
    let e = find_equilibrium(&p, HeisenbergState { z1: 0.3, z2: 0.2, theta: 0.0 }, 50, 1e-12);
    assert!(e.converged && !e.certified);
    let v = rhs(&e.point, &p);
    assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
}

#[test]
fn csv_layout() {
    let p = params(&[("112", rat_int(1))]);
    let tr = integrate(&p, HeisenbergState::ORIGIN, 1.0, 0.5, DEFAULT_BLOWUP).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,z1,z2,theta");
    assert_eq!(lines.len(), 4);
    let last: Vec<f64> = lines[3].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last, vec![1.0, 0.0, -1.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn random_params_refine(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = QuadraticParams::random(&mut rng, 1);
        let rep = refinement_study(&p, None, HORIZON, &[0.05, 0.025, 0.0125]).unwrap();
        prop_assert!(rep.rows.windows(2).all(|w| w[1].residual <= w[0].residual), "{:?}", rep);
        if let Some(order) = rep.order_estimate {
            prop_assert!(order >= 1.0, "{:?}", rep);
        }
        for dt in [0.05, 0.025] {
            let tr = integrate(&p, HeisenbergState::ORIGIN, HORIZON, dt, DEFAULT_BLOWUP).unwrap();
            prop_assert!(theta_consistency(&tr, &p) <= 10.0 * dt.powi(4) * HORIZON);
        }
    }
}
