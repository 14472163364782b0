mod common;

use carnot_singular::free_lie::{build_free_algebra, DualCovector, LieVector};
use carnot_singular::chen_flow::GroupElement;
use carnot_singular::linalg::{inverse, Mat};
use carnot_singular::strata::codim::{codim_report, compute};
use carnot_singular::strata::plan::{midpoint_residual, DEFAULT_HORIZON};
use carnot_singular::strata::system::{CaseKind, CaseTag};
use carnot_singular::strata::*;
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn r2s4() -> CaseTag {
    CaseTag::new(CaseKind::R2S4, true)
}

fn r3s3() -> CaseTag {
    CaseTag::new(CaseKind::R3S3, true)
}

#[test]
fn covector_to_matrix_maps() {
    let g = build_free_algebra(2, 4).unwrap();
    let l = covector_from_system(&g, &Mat::from_rows(&[vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(-1, 1)]]), &[q(0, 1), q(0, 1)]);
    assert_eq!(l.eval_word("2112").unwrap(), q(1, 1));
    let sys = system_of(&l, r2s4()).unwrap();
    assert_eq!(sys.m, Mat::from_rows(&[vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(-1, 1)]]));
    assert_eq!(classify(&l, r2s4(), 0.0).unwrap().lambda, 1);

    let rot = DualCovector::from_word_values(
        &g,
        &[("2212", q(-1, 1)), ("1112", q(-1, 1)), ("2112", q(0, 1)), ("12", q(0, 1))],
    )
    .unwrap();
    let sys = system_of(&rot, r2s4()).unwrap();
    assert_eq!(sys.m, Mat::from_rows(&[vec![q(0, 1), q(-1, 1)], vec![q(1, 1), q(0, 1)]]));
    assert_eq!(classify(&rot, r2s4(), 0.0).unwrap().lambda, 2);

    let h = build_free_algebra(3, 3).unwrap();
    let diag = DualCovector::from_word_values(
        &h,
        &[
            ("123", q(2, 1)),
            ("231", q(1, 1)),
            ("312", q(-3, 1)),
            ("223", q(0, 1)),
            ("323", q(0, 1)),
            ("131", q(0, 1)),
            ("331", q(0, 1)),
            ("112", q(0, 1)),
            ("212", q(0, 1)),
        ],
    )
    .unwrap();
    let sys = system_of(&diag, r3s3()).unwrap();
    let want = Mat::from_rows(&[vec![q(2, 1), q(0, 1), q(0, 1)], vec![q(0, 1), q(1, 1), q(0, 1)], vec![q(0, 1), q(0, 1), q(-3, 1)]]);
    assert_eq!(sys.m, want);
    assert_eq!(classify(&diag, r3s3(), 0.0).unwrap().lambda, 1);
}

#[test]
fn representatives_classify_and_normalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for lambda in 1..=4 {
        for _ in 0..6 {
            let (_, l) = r2s4_representative(&mut rng, lambda);
            check_normal_form(&l, r2s4(), lambda);
        }
    }
    for lambda in 1..=9 {
        for _ in 0..6 {
            let (_, l) = r3s3_representative(&mut rng, lambda);
            check_normal_form(&l, r3s3(), lambda);
        }
    }
}

fn check_normal_form(l: &DualCovector<Q>, case: CaseTag, lambda: usize) {
    let label = classify(l, case, 0.0).unwrap();
    assert_eq!(label.lambda, lambda, "{case:?}");
    let sys = system_of(l, case).unwrap();
    let ns = normalize(&sys, 1e-9).unwrap();
    assert_eq!(ns.label, label);
    match &ns.exact {
        Some(f) => {
            let pi = inverse(&f.p, 0.0).unwrap();
            let conj = pi.mul(&sys.m).mul(&f.p);
            assert_eq!(conj, f.n.scale(&f.mu));
            let pb: Vec<Q> = f.p.mul_vec(&f.b).into_iter().map(|x| x * f.mu.clone()).collect();
            assert_eq!(pb, sys.v);
        }
        None => {
            let f = &ns.float;
            let m = sys.m.to_f64();
            let pi = inverse(&f.p, 1e-12).unwrap();
            let diff = pi.mul(&m).mul(&f.p).sub(&f.n.scale(&f.mu));
            assert!(diff.max_abs() <= 1e-9 * m.max_abs().max(1.0), "{diff:?}");
        }
    }
}

#[test]
fn normalize_rotation_scaling() {
    let g = build_free_algebra(2, 4).unwrap();
    let m = Mat::from_rows(&[vec![q(0, 1), q(-2, 1)], vec![q(2, 1), q(0, 1)]]);
    let l = covector_from_system(&g, &m, &[q(1, 1), q(0, 1)]);
    let ns = normalize(&system_of(&l, r2s4()).unwrap(), 0.0).unwrap();
    let f = ns.exact.unwrap();
    assert_eq!(f.n, Mat::from_rows(&[vec![q(0, 1), q(-1, 1)], vec![q(1, 1), q(0, 1)]]));
    assert_eq!(f.mu, q(2, 1));
    let pi = inverse(&f.p, 0.0).unwrap();
    assert_eq!(pi.mul(&m).mul(&f.p), f.n.scale(&f.mu));
}

#[test]
fn nilpotent_cube_zero_normal_form() {
    let h = build_free_algebra(3, 3).unwrap();
    let m = Mat::from_rows(&[vec![q(0, 1), q(0, 1), q(0, 1)], vec![q(1, 1), q(0, 1), q(0, 1)], vec![q(0, 1), q(1, 1), q(0, 1)]]);
    let l = covector_from_system(&h, &m, &[q(0, 1), q(0, 1), q(0, 1)]);
    let ns = normalize(&system_of(&l, r3s3()).unwrap(), 0.0).unwrap();
    assert_eq!(ns.label.lambda, 7);
    let want = Mat::from_rows(&[vec![q(0, 1), q(1, 1), q(0, 1)], vec![q(0, 1), q(0, 1), q(1, 1)], vec![q(0, 1), q(0, 1), q(0, 1)]]);
    assert_eq!(ns.exact.unwrap().n, want);
}

/// Five-point central difference.
fn derivative(f: impl Fn(f64) -> Vec<f64>, t: f64, h: f64) -> Vec<f64> {
    let (a, b, c, d) = (f(t - 2.0 * h), f(t - h), f(t + h), f(t + 2.0 * h));
    (0..a.len()).map(|i| (a[i] - 8.0 * b[i] + 8.0 * c[i] - d[i]) / (12.0 * h)).collect()
}

#[test]
fn closed_forms_solve_their_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases: Vec<(CaseTag, usize, DualCovector<Q>)> = Vec::new();
    for lambda in 1..=4 {
        cases.push((r2s4(), lambda, r2s4_representative(&mut rng, lambda).1));
    }
    for lambda in 1..=9 {
        cases.push((r3s3(), lambda, r3s3_representative(&mut rng, lambda).1));
    }
    let r2s3 = build_free_algebra(2, 3).unwrap();
    let l = covector_from_system(&r2s3, &Mat::zeros(2, 2), &[q(2, 3), q(-1, 1)]);
    cases.push((CaseTag::new(CaseKind::R2S3, true), 1, l));
    for (case, lambda, l) in cases {
        let ns = normalize(&system_of(&l, case).unwrap(), 1e-9).unwrap();
        assert_eq!(ns.label.lambda, lambda);
        for _ in 0..100 {
            let z0: Vec<f64> = (0..ns.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tr = trajectory(&ns.label, &ns.float, &z0);
            let t = rng.gen_range(-1.0..1.0);
            let dz = derivative(|s| tr.eval(s), t, 1e-3);
            let rhs = ns.float.drift(&tr.eval(t));
            let err = dz.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = rhs.iter().map(|x| x.abs()).fold(1.0, f64::max);
            assert!(err <= 1e-10 * scale, "{case:?} stratum {lambda}: {err}");
            let start = tr.eval(0.0);
            assert!(start.iter().zip(&z0).all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }
}

#[test]
fn closed_form_spot_values() {
    let g = build_free_algebra(2, 4).unwrap();
    // diag(1,-1), b = (1,1)
    let l = covector_from_system(&g, &Mat::from_rows(&[vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(-1, 1)]]), &[q(1, 1), q(1, 1)]);
    let ns = normalize(&system_of(&l, r2s4()).unwrap(), 0.0).unwrap();
    let tr = trajectory(&ns.label, &ns.float, &[0.0, 0.0]);
    for t in [0.3, 1.0, 2.5] {
        let z = tr.eval(t);
        assert!((z[0] - (t.exp() - 1.0)).abs() < 1e-13);
        assert!((z[1] - (1.0 - (-t).exp())).abs() < 1e-13);
    }
    // rotation: circle through the origin centred at (-b2, b1), closing after 2 pi
    let l = covector_from_system(&g, &Mat::from_rows(&[vec![q(0, 1), q(-1, 1)], vec![q(1, 1), q(0, 1)]]), &[q(1, 2), q(3, 1)]);
    let ns = normalize(&system_of(&l, r2s4()).unwrap(), 0.0).unwrap();
    let tr = trajectory(&ns.label, &ns.float, &[0.0, 0.0]);
    let b = &ns.float.b;
    let r = b[0].hypot(b[1]);
    for t in [0.4, 1.7, 3.0] {
        let z = tr.eval(t);
        assert!(((z[0] + b[1]).hypot(z[1] - b[0]) - r).abs() < 1e-12);
    }
    let z = tr.eval(2.0 * std::f64::consts::PI);
    assert!(z[0].hypot(z[1]) <= 1e-9);
    // parabola
    let l = covector_from_system(&g, &Mat::from_rows(&[vec![q(0, 1), q(1, 1)], vec![q(0, 1), q(0, 1)]]), &[q(2, 1), q(3, 1)]);
    let ns = normalize(&system_of(&l, r2s4()).unwrap(), 0.0).unwrap();
    assert_eq!(ns.exact.as_ref().unwrap().b, vec![q(2, 1), q(3, 1)]);
    let tr = trajectory(&ns.label, &ns.float, &[0.0, 0.0]);
    let z = tr.eval(1.5);
    assert!((z[0] - (3.0 * 1.5 * 1.5 / 2.0 + 2.0 * 1.5)).abs() < 1e-13);
    assert!((z[1] - 4.5).abs() < 1e-13);
    // equilibria on a line for the parabola case with b2 = 0
    let e = equilibria(&ns.exact.as_ref().unwrap().n, &[q(2, 1), q(0, 1)], 0.0);
    assert_eq!(e.kind(), "line");
    if let EquilibriumSet::Affine { point, .. } = e {
        assert_eq!(point[1], q(-2, 1));
    }
}

#[test]
fn r2s4_branching_plan_follows_axis_then_line() {
    let g = build_free_algebra(2, 4).unwrap();
    let l = covector_from_system(&g, &Mat::from_rows(&[vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(-1, 1)]]), &[q(0, 1), q(2, 1)]);
    let ns = normalize(&system_of(&l, r2s4()).unwrap(), 0.0).unwrap();
    assert!(ns.label.xi_all.contains(&2));
    let form = ns.exact.clone().unwrap();
    let plan = default_plan(&ns.label, &form);
    assert_eq!(plan.legs.len(), 2);
    let path = concatenate(&ns.label, &form, &plan).unwrap();
    assert!(path.exact);
    for v in path.vertices() {
        let on_axis = v[0] == q(0, 1);
        let on_line = v[1] == form.b[1];
        assert!(on_axis || on_line, "{v:?}");
    }
    let lifted = lift(&g, &path, &form).unwrap();
    assert!(certify_exact(&g, &lifted, &l).unwrap().holds());
}

#[test]
fn r3s3_tree_plan_stays_in_two_planes() {
    let h = build_free_algebra(3, 3).unwrap();
    let m = Mat::from_rows(&[vec![q(1, 1), q(0, 1), q(0, 1)], vec![q(0, 1), q(-1, 1), q(0, 1)], vec![q(0, 1), q(0, 1), q(0, 1)]]);
    let l = covector_from_system(&h, &m, &[q(0, 1), q(3, 2), q(0, 1)]);
    let ns = normalize(&system_of(&l, r3s3()).unwrap(), 0.0).unwrap();
    assert!(ns.label.xi_all.contains(&9));
    let form = ns.exact.clone().unwrap();
    let path = concatenate(&ns.label, &form, &default_plan(&ns.label, &form)).unwrap();
    let b2 = form.b[1].clone();
    for v in path.vertices() {
        assert!(v[0] == q(0, 1) || v[1] == b2, "{v:?}");
    }
    let starts = &path.leg_starts;
    let verts = path.vertices();
    for &k in &starts[1..] {
        assert!(form.drift(&verts[k]).iter().all(|x| *x == q(0, 1)));
    }
    let lifted = lift(&h, &path, &form).unwrap();
    assert!(certify_exact(&h, &lifted, &l).unwrap().holds());
}

#[test]
fn switching_off_equilibrium_is_rejected() {
    let g = build_free_algebra(2, 4).unwrap();
    let l = covector_from_system(&g, &Mat::from_rows(&[vec![q(0, 1), q(1, 1)], vec![q(0, 1), q(0, 1)]]), &[q(1, 1), q(1, 1)]);
    let ns = normalize(&system_of(&l, r2s4()).unwrap(), 0.0).unwrap();
    let form = ns.exact.unwrap();
    let zero = vec![q(0, 1), q(0, 1)];
    let plan = ConcatenationPlan::new(vec![
        Leg::Flow { z0: zero.clone(), t0: q(0, 1), t1: q(1, 1) },
        Leg::Flow { z0: vec![q(3, 2), q(1, 1)], t0: q(0, 1), t1: q(1, 1) },
    ]);
    assert!(concatenate(&ns.label, &form, &plan).is_err());
    let not_origin = ConcatenationPlan::new(vec![Leg::Flow { z0: vec![q(1, 1), q(0, 1)], t0: q(0, 1), t1: q(1, 1) }]);
    assert!(concatenate(&ns.label, &form, &not_origin).is_err());
}

#[test]
fn r2s3_line_lifts_to_one_parameter_subgroup() {
    let g = build_free_algebra(2, 3).unwrap();
    let l = covector_from_system(&g, &Mat::zeros(2, 2), &[q(2, 1), q(5, 1)]);
    let case = CaseTag::new(CaseKind::R2S3, true);
    let ns = normalize(&system_of(&l, case).unwrap(), 0.0).unwrap();
    let form = ns.exact.unwrap();
    let path = concatenate(&ns.label, &form, &default_plan(&ns.label, &form)).unwrap();
    let lifted = lift(&g, &path, &form).unwrap();
    // exp(t (lambda_212 X1 - lambda_112 X2)) with lambda_112 = -5
    let end = lifted.points.last().unwrap();
    let want = GroupElement::exp(LieVector::horizontal(&g, &[q(2, 1), q(5, 1)]));
    assert_eq!(*end, want);
    assert!(certify_exact(&g, &lifted, &l).unwrap().holds());
}

#[test]
fn zero_path_lifts_to_identity() {
    let g = build_free_algebra(2, 4).unwrap();
    let l = covector_from_system(&g, &Mat::from_rows(&[vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(-1, 1)]]), &[q(0, 1), q(0, 1)]);
    let ns = normalize(&system_of(&l, r2s4()).unwrap(), 0.0).unwrap();
    let form = ns.exact.unwrap();
    // b = 0: the origin is an equilibrium and the curve through it is constant
    let plan = ConcatenationPlan::new(vec![Leg::Flow { z0: vec![q(0, 1), q(0, 1)], t0: q(0, 1), t1: q(1, 1) }]);
    let path = concatenate(&ns.label, &form, &plan).unwrap();
    let lifted = lift(&g, &path, &form).unwrap();
    assert!(lifted.points.iter().all(|p| p.is_identity()));
}

#[test]
fn exponential_leg_residual_shrinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (g, l) = r2s4_representative(&mut rng, 1);
    let lf = l.to_f64();
    let sys = system_of(&lf, r2s4()).unwrap();
    let ns = normalize(&sys, 1e-9).unwrap();
    let mut res = Vec::new();
    for k in 4..=7 {
        let h = 0.5f64.powi(k);
        let plan = ConcatenationPlan::new(vec![Leg::Flow { z0: vec![0.0, 0.0], t0: 0.0, t1: 1.0 }]).with_resolution(h);
        let path = concatenate(&ns.label, &ns.float, &plan).unwrap();
        let lifted = lift(&g, &path, &ns.float).unwrap();
        res.push(midpoint_residual(&lifted, &lf).unwrap());
    }
    for w in res.windows(2) {
        assert!(w[1] < w[0] || w[0] < 1e-13, "{res:?}");
    }
    assert_eq!(DEFAULT_HORIZON, 40.0);
}

#[test]
fn exact_sampled_leg_starts_at_origin() {
    // saddle with both drift entries nonzero: the curve is not polynomial
    let g = build_free_algebra(2, 4).unwrap();
    let m = Mat::from_rows(&[vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(-1, 1)]]);
    let l = covector_from_system(&g, &m, &[q(1, 1), q(2, 1)]);
    let ns = normalize(&system_of(&l, r2s4()).unwrap(), 0.0).unwrap();
    let form = ns.exact.unwrap();
    let path = concatenate(&ns.label, &form, &default_plan(&ns.label, &form)).unwrap();
    assert!(!path.exact);
    assert!(path.vertices()[0].iter().all(|x| *x == q(0, 1)));
}

#[test]
fn codim_tables() {
    let t = codim_report(r2s4()).unwrap();
    assert!(t.strata.iter().all(|s| s.computed >= 3));
    let general = codim_report(CaseTag::new(CaseKind::R3S3, false)).unwrap();
    let per: Vec<usize> = general.strata.iter().map(|s| s.computed).collect();
    assert_eq!(per, vec![2, 2, 2, 2, 2, 3, 3, 1, 2]);
    assert_eq!(general.overall, 1);
    let free = compute(r3s3());
    assert_eq!(free.overall, 3);
    assert_eq!(codim_report(CaseTag::new(CaseKind::R2S3, true)).unwrap().overall, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn labels_invariant_under_positive_scaling(seed in any::<u64>(), lambda in 1usize..=9, num in 1i64..20, den in 1i64..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = q(num, den);
        let (case, l) = if lambda <= 4 && seed % 2 == 0 {
            (r2s4(), r2s4_representative(&mut rng, lambda).1)
        } else {
            (r3s3(), r3s3_representative(&mut rng, lambda).1)
        };
        let a = classify(&l, case, 0.0).unwrap();
        let b = classify(&l.scale(&c), case, 0.0).unwrap();
        prop_assert_eq!(a.lambda, b.lambda);
        prop_assert_eq!(a.xi_all, b.xi_all);
    }

    #[test]
    fn float_classification_agrees_off_boundaries(seed in any::<u64>(), lambda in 1usize..=9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, l) = r3s3_representative(&mut rng, lambda);
        let exact = classify(&l, r3s3(), 0.0).unwrap();
        let float = classify(&l.to_f64(), r3s3(), 1e-9).unwrap();
        prop_assert_eq!(exact.lambda, float.lambda);
    }
}
