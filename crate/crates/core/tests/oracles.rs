mod common;

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use regflow::flow::{diagnostics, direct_rhs, initial_inverse};
use regflow::gallery::{
    autoconvolve, compliant_instance, compliant_search, condition_number, feigenbaum_reference, hilbert_matrix,
    lookup, make_affine, make_autoconvolution, make_feigenbaum_like, AffineKind, CompliantSearch, Offset,
};
use regflow::hilbert::{op_norm, regularized_inverse, solve_regularized};
use regflow::integrator::{convergence_order, integrate};
use regflow::problem::{estimate_bounds, eval_f, fd_jacobian, jacobian};
use regflow::theory::{k_formula, solve_source, SOURCE_TOL};
use regflow::{B0Mode, Error, HOperator, HVector, IntegratorConfig, Method, Regularization, Schedule, SolverState};

fn profile(n: usize) -> HVector {
    hv(DVector::from_fn(n, |i, _| (std::f64::consts::PI * (i + 1) as f64 / (n + 1) as f64).sin()))
}

#[test]
fn regularized_solve_matches_explicit_inverse() {
    let mut r = rng(1);
    for n in 1..=10 {
        let j = random_matrix(n, n, &mut r);
        let a = j.tr_mul(&j);
        let rhs = random_vector(n, &mut r);
        let oracle = (&a + DMatrix::identity(n, n) * 0.1).try_inverse().unwrap() * &rhs;
        let y = solve_regularized(&HOperator::from_dmatrix(a).unwrap(), 0.1, &hv(rhs)).unwrap();
        assert!((&*y - &oracle).norm() <= 1e-9 * oracle.norm(), "n={n}");
    }
}

#[test]
fn direct_rhs_matches_inverse_oracle() {
    let mut r = rng(2);
    let s = Schedule::default();
    for n in 1..=10 {
        let a = random_matrix(n, n, &mut r);
        let xhat = random_vector(n, &mut r);
        let p = affine(a.clone(), xhat.clone());
        let x0 = random_vector(n, &mut r);
        let x = random_vector(n, &mut r);
        let t = 3.0;
        let eps = s.eps(t).unwrap();
        let m = a.tr_mul(&a) + DMatrix::identity(n, n) * eps;
        let g = a.tr_mul(&(&a * (&x - &xhat))) + (&x - &x0) * eps;
        let oracle = -(m.try_inverse().unwrap() * g);
        let got = direct_rhs(&p, &s, &hv(x0), &hv(x), t).unwrap();
        assert!((&*got - &oracle).norm() <= 1e-9 * (1.0 + oracle.norm()), "n={n}");
    }
}

#[test]
fn hilbert_8_condition_number() {
    let h = hilbert_matrix(8);
    // H is symmetric positive definite, so its eigenvalues are its singular values
    let eig = SymmetricEigen::new(h.clone()).eigenvalues;
    let oracle = eig.max() / eig.min();
    assert!(relative(oracle, 1.5258e10) <= 1e-3, "oracle {oracle:e}");
    assert!(relative(condition_number(&h), oracle) <= 1e-4);
}

fn autoconvolution_oracle(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let ds = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let mut sum = 0.0;
            for j in 0..=i {
                sum += x[j] * x[i - j];
            }
            ds * sum
        })
        .collect()
}

#[test]
fn autoconvolution_matches_quadrature_oracle() {
    let n = 16;
    let e = make_autoconvolution(n).unwrap();
    let x: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64 * 3.0).cos() + 0.5).collect();
    let y = autoconvolution_oracle(e.xhat.as_slice());
    let expected: Vec<f64> = autoconvolution_oracle(&x).iter().zip(&y).map(|(a, b)| a - b).collect();
    let got = eval_f(&e.problem, &hv(DVector::from_vec(x.clone()))).unwrap();
    for (g, w) in got.iter().zip(&expected) {
        assert!((g - w).abs() <= 1e-10, "{g} vs {w}");
    }
    let conv = autoconvolve(&DVector::from_vec(x.clone()));
    for (c, w) in conv.iter().zip(autoconvolution_oracle(&x)) {
        assert!((c - w).abs() <= 1e-12);
    }
    assert!(eval_f(&e.problem, &e.xhat).unwrap().norm() <= 1e-12);
}

#[test]
fn autoconvolution_second_derivative_is_uniform() {
    let e = make_autoconvolution(12).unwrap();
    let a = estimate_bounds(&e.problem, &e.xhat, 0.1, 16, 3).unwrap();
    let shifted = hv(&*e.xhat * 1.5);
    let b = estimate_bounds(&e.problem, &shifted, 0.1, 16, 3).unwrap();
    assert!(relative(a.n2, b.n2) <= 0.1, "{} vs {}", a.n2, b.n2);
}

#[test]
fn feigenbaum_reference_solves_collocation() {
    for n in [4, 6, 8, 10] {
        let e = make_feigenbaum_like(n).unwrap();
        assert_eq!(e.xhat.as_slice(), feigenbaum_reference(n).unwrap().as_slice());
        let res = eval_f(&e.problem, &e.xhat).unwrap().norm();
        assert!(res <= 1e-8, "n={n}: residual {res:e}");
        let j = jacobian(&e.problem, &e.xhat).unwrap();
        let fd = fd_jacobian(&e.problem, &e.xhat, 1e-6).unwrap();
        assert!((&*j - &*fd).amax() <= 1e-5, "n={n}");
    }
    assert!(make_feigenbaum_like(3).is_err());
}

#[test]
fn central_differences_are_second_order() {
    let e = make_feigenbaum_like(6).unwrap();
    let x = hv(&*e.xhat + DVector::from_element(e.xhat.dim(), 0.01));
    let exact = jacobian(&e.problem, &x).unwrap();
    let err = |h: f64| (&*fd_jacobian(&e.problem, &x, h).unwrap() - &*exact).amax();
    let ratio = err(1e-2) / err(5e-3);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn every_gallery_entry_is_consistent() {
    for label in [
        "identity-5",
        "hilbert-6",
        "rank-deficient-4",
        "autoconvolution-10",
        "feigenbaum-4",
        "feigenbaum-8",
        "compliant-affine-3",
        "compliant-nonlinear-5",
    ] {
        let e = lookup(label, 0).unwrap();
        let res = eval_f(&e.problem, &e.xhat).unwrap().norm();
        assert!(res <= 1e-8 * (1.0 + e.xhat.norm()), "{label}: {res:e}");
        assert!(e.problem.has_analytic_jacobian(), "{label}");
        let x = &e.default_x0;
        let j = jacobian(&e.problem, x).unwrap();
        let fd = fd_jacobian(&e.problem, x, 1e-5).unwrap();
        assert!((&*j - &*fd).amax() <= 1e-6 * (1.0 + j.amax()), "{label}");
    }
    assert!(matches!(lookup("nothing-3", 0), Err(Error::UnknownProblem(_))));
    assert!(matches!(lookup("identity-x", 0), Err(Error::UnknownProblem(_))));
}

#[test]
fn certificate_constants_recompute() {
    let ci = compliant_instance(8, 0).unwrap();
    let c = &ci.certificate;
    let k = k_formula(c.n1, c.n2, c.r, c.b, c.eps0, c.b0_norm, c.lambda0_norm);
    let by_hand = 2.0 * c.n1 * c.n2 * c.r + c.b + c.eps0 * c.b0_norm + c.lambda0_norm;
    assert!(relative(c.k, by_hand) <= 1e-12);
    assert!(relative(k, by_hand) <= 1e-12);

    let p = &ci.entry.problem;
    let j = jacobian(p, &ci.entry.xhat).unwrap();
    let n = j.nrows();
    let lambda0 = DMatrix::identity(n, n) - &*ci.b0 * (j.tr_mul(&j) + DMatrix::identity(n, n) * c.eps0);
    assert!(relative(c.lambda0_norm, spectral_norm_oracle(&lambda0)) <= 1e-6);
    assert!(relative(c.b0_norm, spectral_norm_oracle(&ci.b0)) <= 1e-6);
    assert!(relative(c.eps0, ci.schedule.eps(0.0).unwrap()) <= 1e-15);
    assert!(relative(c.b, ci.schedule.b_constant()) <= 1e-15);
}

#[test]
fn source_condition_recovers_constructive_w() {
    let mut r = rng(4);
    for n in 1..=8 {
        let a = DMatrix::identity(n, n) + random_matrix(n, n, &mut r) * 0.3;
        let xhat = random_vector(n, &mut r);
        let v = random_vector(n, &mut r);
        let p = affine(a.clone(), xhat.clone());
        let x0 = hv(&xhat - a.tr_mul(&a) * &v);
        let src = solve_source(&p, &hv(xhat), &x0, SOURCE_TOL).unwrap();
        assert!(src.passes);
        assert!((&*src.w - &v).norm() <= 1e-6 * v.norm(), "n={n}");
    }
}

#[test]
fn identity_instance_certifies_within_two_halvings() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let n = 4;
        let e = make_affine(n, AffineKind::Identity, &hv(random_vector(n, &mut r))).unwrap();
        let w = hv(random_vector(n, &mut r));
        let ci = compliant_search(&e, &Offset::Source(w), &CompliantSearch::default(), seed).unwrap();
        assert!(ci.certificate.overall);
        assert!(ci.halvings <= 2, "seed {seed}: {} halvings", ci.halvings);
    }
}

#[test]
fn small_hilbert_instances_certify_and_recover_w() {
    for n in [2, 3] {
        let e = make_affine(n, AffineKind::HilbertMatrix, &profile(n)).unwrap();
        let w = hv(DVector::from_element(n, 1.0));
        let ci = compliant_search(&e, &Offset::Source(w.clone()), &CompliantSearch::default(), 0).unwrap();
        assert!(ci.certificate.overall, "n={n}");
        // x0 = xhat - A*A (scale w / ||w||); recover that multiple of w
        let h = hilbert_matrix(n);
        let shift = &*ci.entry.xhat - &*ci.entry.default_x0;
        let expected = h.tr_mul(&h).try_inverse().unwrap() * &shift;
        assert!((&*ci.certificate.w - &expected).norm() <= 1e-6 * expected.norm(), "n={n}");
        let unit = &*w / w.norm();
        let scale = expected.dot(&unit);
        // x0 is stored in floating point, so the recovered direction carries
        // an error of about ulp(xhat) / lambda_min(H* H)
        let lam_min = SymmetricEigen::new(h.tr_mul(&h)).eigenvalues.min();
        let tol = 1e-9 * expected.norm() + 8.0 * f64::EPSILON * ci.entry.xhat.amax() * (n as f64).sqrt() / lam_min;
        assert!((&expected - unit * scale).norm() <= tol, "n={n}");
    }
}

// lambda_min(H8* H8) is about 1e-20, so eps0 ||B0|| + ||Lambda0|| stays near 1 for
// every representable eps0 and the radius numerator never turns positive.
#[test]
fn hilbert_8_admits_no_compliant_configuration() {
    let e = make_affine(8, AffineKind::HilbertMatrix, &profile(8)).unwrap();
    let w = hv(DVector::from_element(8, 1.0));
    match compliant_search(&e, &Offset::Source(w), &CompliantSearch::default(), 0) {
        Err(Error::NoCompliantConfiguration(msg)) => assert!(msg.contains("hilbert-8"), "{msg}"),
        other => panic!("expected no compliant configuration, got {other:?}"),
    }
}

#[test]
fn rank_deficient_offset_outside_range_is_rejected() {
    let n = 4;
    let e = make_affine(n, AffineKind::RankDeficient, &profile(n)).unwrap();
    let d = HVector::basis(n, n - 1).unwrap();
    match compliant_search(&e, &Offset::Direct(d), &CompliantSearch::default(), 0) {
        Err(Error::NoCompliantConfiguration(msg)) => assert!(msg.contains("source"), "{msg}"),
        other => panic!("expected a source-condition failure, got {other:?}"),
    }
}

#[test]
fn compliant_instances_always_certify() {
    for n in [1, 2, 4, 8, 16] {
        for seed in 0..3 {
            assert!(compliant_instance(n, seed).unwrap().certificate.overall, "n={n} seed={seed}");
        }
    }
    assert!(compliant_instance(17, 0).is_err());
}

#[test]
fn identity_run_from_root_is_stationary() {
    let n = 5;
    let e = make_affine(n, AffineKind::Identity, &profile(n)).unwrap();
    let s = Schedule::default();
    let b0 = initial_inverse(&e.problem, &e.xhat, s.eps0(), B0Mode::ExactInverse).unwrap();
    let st0 = SolverState::coupled(e.xhat.clone(), b0).unwrap();
    let traj = integrate(&e.problem, &s, &st0, &IntegratorConfig::default(), Some(&e.xhat), None).unwrap();
    for rec in &traj.records {
        assert!(rec.diagnostics.err_norm.unwrap() <= 1e-12);
    }
}

#[test]
fn compliant_run_respects_b_bound_and_record_grid() {
    let ci = compliant_instance(4, 7).unwrap();
    let s = ci.schedule;
    let st0 = SolverState::coupled(ci.entry.default_x0.clone(), ci.b0.clone()).unwrap();
    let cfg = IntegratorConfig { horizon_t: 10.0, record_every: 25, ..Default::default() };
    let traj = integrate(&ci.entry.problem, &s, &st0, &cfg, Some(&ci.entry.xhat), Some(ci.r)).unwrap();
    let b0_norm = op_norm(&ci.b0).unwrap();
    for (k, rec) in traj.records.iter().enumerate() {
        assert_eq!(rec.state.t, (k * 25) as f64 * 0.01);
        let d = &rec.diagnostics;
        assert!(d.b_norm.unwrap() <= 1.0 / d.eps + b0_norm + 1e-8);
        assert!(d.err_norm.unwrap() / d.eps < ci.r);
    }
    // diagnostics recomputed from a record agree with the stored ones
    let last = traj.last();
    let again = diagnostics(&ci.entry.problem, &s, &last.state, Some(&ci.entry.xhat)).unwrap();
    assert_eq!(again, last.diagnostics);
}

#[test]
fn order_windows_on_linear_scalar_flow() {
    let n = 1;
    let e = make_affine(n, AffineKind::Identity, &hv(DVector::from_element(1, 0.3))).unwrap();
    let s = Schedule::default();
    let st0 = SolverState::direct(hv(DVector::from_element(1, 1.0)));
    for (method, lo, hi) in [(Method::Rk4, 14.0, 18.0), (Method::Euler, 1.8, 2.2)] {
        let cfg = IntegratorConfig { method, horizon_t: 2.0, ..Default::default() };
        let errs = convergence_order(&e.problem, &s, &st0, &cfg, &[0.1, 0.05, 0.025]).unwrap();
        for w in errs.windows(2) {
            let ratio = w[0].1 / w[1].1;
            assert!((lo..=hi).contains(&ratio), "{method:?}: {ratio}");
        }
    }
}

#[test]
fn exact_b0_regularized_inverse_oracle() {
    let mut r = rng(9);
    let n = 6;
    let a = random_matrix(n, n, &mut r);
    let p = affine(a.clone(), random_vector(n, &mut r));
    let x0 = hv(random_vector(n, &mut r));
    let b0 = initial_inverse(&p, &x0, 0.05, B0Mode::ExactInverse).unwrap();
    let oracle = (a.tr_mul(&a) + DMatrix::identity(n, n) * 0.05).try_inverse().unwrap();
    assert!((&*b0 - &oracle).amax() <= 1e-9 * oracle.amax());
    let again = regularized_inverse(&HOperator::from_dmatrix(a.tr_mul(&a)).unwrap(), 0.05).unwrap();
    assert_eq!(again, b0);
}
