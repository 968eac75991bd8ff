//! Convergence certificate for the coupled flow and numerical verifiers for
//! the two auxiliary lemmas (Riccati-type envelope, operator Gronwall bound).
//!
//! Notation follows the solver: `N1 >= ||F'||`, `N2 >= ||F''||` on the ball
//! `U(xhat, R eps(0))`, `b` the schedule decay constant, `B0 = B(0)`,
//! `Lambda0 = I - B0 (F'(xhat)* F'(xhat) + eps(0) I)`.
//!
//! ```text
//! k      = 2 N1 N2 R + b + eps0 ||B0|| + ||Lambda0||
//! lambda = 3 N1 N2 (1 + eps0 ||B0||) / (1 - k - b eps0)
//! ```
//!
//! The certificate holds when
//!   (i)   k + b eps0 < 1,
//!   (ii)  1/R <= lambda,
//!   (iii) lambda < (1 - k - b eps0) / (2 (k + 2 + eps0 ||B0||) ||w||),
//!   (iv)  lambda < eps0 / ||x0 - xhat||,
//!   (v)   xhat - x0 = F'(xhat)* F'(xhat) w for some w (numerically),
//! and the sampled derivative bounds cover the ball of radius `R eps0`.
//! Under these the trajectory stays in `||x(t) - xhat|| < R eps(t)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{op_norm, op_norm_dense, HOperator, HVector};
use crate::problem::{BallBounds, NonlinearProblem};
use crate::schedule::Regularization;

/// Relative cutoff for the spectral pseudo-inverse in [`solve_source`].
pub const SOURCE_TOL: f64 = 1e-8;

/// Slack on `1/R <= lambda`. With the canonical `R` the two sides are equal in
/// exact arithmetic.
pub const R_LAMBDA_RTOL: f64 = 1e-12;

/// `k = 2 N1 N2 R + b + eps0 ||B0|| + ||Lambda0||`.
pub fn k_formula(n1: f64, n2: f64, r: f64, b: f64, eps0: f64, b0_norm: f64, lambda0_norm: f64) -> f64 {
    2.0 * n1 * n2 * r + b + eps0 * b0_norm + lambda0_norm
}

/// Returns `(k, ||Lambda0||)` with `Lambda0 = I - B0 (F'(xhat)* F'(xhat) + eps0 I)`.
#[allow(clippy::too_many_arguments)]
pub fn compute_k(
    n1: f64,
    n2: f64,
    r: f64,
    b: f64,
    eps0: f64,
    b0: &HOperator,
    p: &NonlinearProblem,
    xhat: &HVector,
) -> Result<(f64, f64)> {
    if b0.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: b0.dim() });
    }
    if xhat.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: xhat.dim() });
    }
    let lambda0 = lambda0_norm(b0, eps0, p, xhat)?;
    let b0_norm = op_norm(b0)?;
    Ok((k_formula(n1, n2, r, b, eps0, b0_norm, lambda0), lambda0))
}

/// `||I - B0 (F'(xhat)* F'(xhat) + eps0 I)||`.
pub fn lambda0_norm(b0: &HOperator, eps0: f64, p: &NonlinearProblem, xhat: &HVector) -> Result<f64> {
    let j = p.jacobian_raw(xhat)?;
    let n = p.dim();
    let m = j.tr_mul(&j) + DMatrix::identity(n, n) * eps0;
    op_norm_dense(&(DMatrix::identity(n, n) - &**b0 * m))
}

/// Smallest admissible `R`:
/// `R = (1 - b - eps0 ||B0|| - ||Lambda0|| - b eps0) / ((5 + 3 eps0 ||B0||) N1 N2)`.
pub fn canonical_r(n1: f64, n2: f64, b: f64, eps0: f64, b0_norm: f64, lambda0_norm: f64) -> Result<f64> {
    let numerator = r_numerator(b, eps0, b0_norm, lambda0_norm);
    if numerator <= 0.0 {
        return Err(Error::HypothesesUnsatisfiable { numerator });
    }
    let denominator = (5.0 + 3.0 * eps0 * b0_norm) * n1 * n2;
    if denominator <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "N1 N2 must be positive to fix R (got N1={n1}, N2={n2})"
        )));
    }
    Ok(numerator / denominator)
}

pub(crate) fn r_numerator(b: f64, eps0: f64, b0_norm: f64, lambda0_norm: f64) -> f64 {
    1.0 - b - eps0 * b0_norm - lambda0_norm - b * eps0
}

/// Minimum-norm solution of the source equation.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSolution {
    pub w: HVector,
    /// `||F'(xhat)* F'(xhat) w - (xhat - x0)||`.
    pub residual: f64,
    pub passes: bool,
}

/// Solves `F'(xhat)* F'(xhat) w = xhat - x0` in the least-squares,
/// minimum-norm sense by spectral decomposition, discarding eigenvalues below
/// `tol * lambda_max`. The check passes iff `residual <= tol ||xhat - x0||`.
pub fn solve_source(p: &NonlinearProblem, xhat: &HVector, x0: &HVector, tol: f64) -> Result<SourceSolution> {
    for d in [xhat.dim(), x0.dim()] {
        if d != p.dim() {
            return Err(Error::DimensionMismatch { expected: p.dim(), found: d });
        }
    }
    let n = p.dim();
    let rhs: DVector<f64> = &**xhat - &**x0;
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok(SourceSolution { w: HVector::zeros(n)?, residual: 0.0, passes: true });
    }
    let j = p.jacobian_raw(xhat)?;
    let gram = j.tr_mul(&j);
    let eig = SymmetricEigen::new(gram.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mut w = DVector::zeros(n);
    if top > 0.0 {
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > tol * top {
                let v = eig.eigenvectors.column(i);
                w += v * (v.dot(&rhs) / lam);
            }
        }
    }
    let residual = (&gram * &w - &rhs).norm();
    Ok(SourceSolution { w: HVector::from_dvector(w)?, residual, passes: residual <= tol * rhs_norm })
}

/// Named results of the certificate inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateChecks {
    /// (i) `k + b eps0 < 1`.
    pub k_below_one: bool,
    /// (ii) `1/R <= lambda`.
    pub r_lower_bound: bool,
    /// (iii) `lambda < (1 - k - b eps0) / (2 (k + 2 + eps0 ||B0||) ||w||)`; vacuous when `w = 0`.
    pub source_drift_bound: bool,
    /// (iv) `lambda < eps0 / ||x0 - xhat||`; vacuous when `x0 = xhat`.
    pub start_in_envelope: bool,
    /// (v) `xhat - x0` in the range of `F'(xhat)* F'(xhat)` (residual test).
    pub source_condition: bool,
    /// Sampled bounds were estimated around `xhat` on a radius of at least `R eps0`.
    pub bounds_cover_ball: bool,
}

impl CertificateChecks {
    pub fn all(&self) -> bool {
        self.k_below_one
            && self.r_lower_bound
            && self.source_drift_bound
            && self.start_in_envelope
            && self.source_condition
            && self.bounds_cover_ball
    }

    pub fn named(&self) -> [(&'static str, bool); 6] {
        [
            ("k_below_one", self.k_below_one),
            ("r_lower_bound", self.r_lower_bound),
            ("source_drift_bound", self.source_drift_bound),
            ("start_in_envelope", self.start_in_envelope),
            ("source_condition", self.source_condition),
            ("bounds_cover_ball", self.bounds_cover_ball),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub n1: f64,
    pub n2: f64,
    pub b: f64,
    pub eps0: f64,
    pub b0_norm: f64,
    pub lambda0_norm: f64,
    pub k: f64,
    pub r: f64,
    /// `+inf` when `1 - k - b eps0 <= 0`.
    pub lambda: f64,
    pub w: HVector,
    pub w_norm: f64,
    pub source_residual: f64,
    pub x0_distance: f64,
    pub bound_samples: usize,
    pub bound_inflation: f64,
    pub checks: CertificateChecks,
    pub overall: bool,
    pub notes: Vec<String>,
}

/// `lambda = 3 N1 N2 (1 + eps0 ||B0||) / (1 - k - b eps0)`, or `+inf` when the
/// denominator is not positive.
pub fn lambda_constant(n1: f64, n2: f64, eps0: f64, b0_norm: f64, k: f64, b: f64) -> f64 {
    let gap = 1.0 - k - b * eps0;
    if gap > 0.0 {
        3.0 * n1 * n2 * (1.0 + eps0 * b0_norm) / gap
    } else {
        f64::INFINITY
    }
}

/// Evaluates every hypothesis of the convergence theorem for the coupled flow
/// started at `(x0, B0)` with schedule `s` and radius `r`. Failures are
/// recorded in the result, never raised.
pub fn certify(
    p: &NonlinearProblem,
    xhat: &HVector,
    x0: &HVector,
    s: &dyn Regularization,
    b0: &HOperator,
    bounds: &BallBounds,
    r: f64,
) -> Result<Certificate> {
    let eps0 = s.eps(0.0)?;
    let b = s.b_constant();
    let b0_norm = op_norm(b0)?;
    let (k, lambda0) = compute_k(bounds.n1, bounds.n2, r, b, eps0, b0, p, xhat)?;
    let lambda = lambda_constant(bounds.n1, bounds.n2, eps0, b0_norm, k, b);
    let source = solve_source(p, xhat, x0, SOURCE_TOL)?;
    let w_norm = source.w.norm();
    let x0_distance = (&**x0 - &**xhat).norm();
    let gap = 1.0 - k - b * eps0;

    let source_drift_bound = if w_norm == 0.0 {
        true
    } else {
        lambda < gap / (2.0 * (k + 2.0 + eps0 * b0_norm) * w_norm)
    };
    let start_in_envelope = if x0_distance == 0.0 { lambda.is_finite() } else { lambda < eps0 / x0_distance };
    let center_gap = (&*bounds.center - &**xhat).norm();
    let checks = CertificateChecks {
        k_below_one: k + b * eps0 < 1.0,
        r_lower_bound: r > 0.0 && 1.0 / r <= lambda * (1.0 + R_LAMBDA_RTOL),
        source_drift_bound,
        start_in_envelope,
        source_condition: source.passes,
        bounds_cover_ball: center_gap <= 1e-12 * (1.0 + xhat.norm()) && bounds.radius >= r * eps0 * (1.0 - 1e-12),
    };
    let mut notes = vec![format!(
        "N1, N2 sampled at {} points and inflated by {}; probabilistic, not a proof",
        bounds.samples, bounds.inflation
    )];
    let gram_rank_deficient = {
        let j = p.jacobian_raw(xhat)?;
        let eig = SymmetricEigen::new(j.tr_mul(&j));
        let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        eig.eigenvalues.iter().any(|&l| l <= SOURCE_TOL * top)
    };
    if gram_rank_deficient {
        notes.push("F'(xhat)* F'(xhat) is numerically rank-deficient; minimum-norm w used".into());
    }
    Ok(Certificate {
        n1: bounds.n1,
        n2: bounds.n2,
        b,
        eps0,
        b0_norm,
        lambda0_norm: lambda0,
        k,
        r,
        lambda,
        w: source.w,
        w_norm,
        source_residual: source.residual,
        x0_distance,
        bound_samples: bounds.samples,
        bound_inflation: bounds.inflation,
        overall: checks.all(),
        checks,
        notes,
    })
}

/// `true` iff `v(t) < 1 / mu(t)` at every sample.
pub fn riccati_envelope_check(v_samples: &[(f64, f64)], mu: impl Fn(f64) -> f64) -> Result<bool> {
    if v_samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to check".into()));
    }
    Ok(v_samples.iter().all(|&(t, v)| v < 1.0 / mu(t)))
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Coercivity profile `gamma(t) = lambda_min((A(t) + A(t)*)/2)` sampled on the
/// grid `0, h, 2h, ..., T` and linearly interpolated in between.
pub fn coercivity_profile(a_path: impl Fn(f64) -> DMatrix<f64>, t_end: f64, h: f64) -> impl Fn(f64) -> f64 {
    let n = (t_end / h).round() as usize;
    let values: Vec<f64> = (0..=n).map(|k| min_sym_eigenvalue(&a_path(k as f64 * h))).collect();
    move |t: f64| {
        if n == 0 {
            return values[0];
        }
        let pos = (t / h).clamp(0.0, n as f64);
        let i = (pos.floor() as usize).min(n - 1);
        let frac = pos - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }
}

/// Outcome of [`gronwall_check`] over the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallReport {
    /// `max(0, max_k ||V(t_k)|| - bound(t_k))`.
    pub max_violation: f64,
    /// `max_k | ||V(t_k)|| - bound(t_k) |`; zero when the bound is attained.
    pub max_gap: f64,
}

/// Integrates `V' = G(t) - A(t) V`, `V(0) = V0` with RK4 and compares `||V(t)||`
/// with the operator Gronwall envelope
///
/// ```text
/// e^{-I(t)} ( int_0^t ||G(s)|| e^{I(s)} ds + ||V0|| ),   I(t) = int_0^t gamma
/// ```
///
/// over the grid `t_k = k h`, both integrals by Simpson's rule. Before use,
/// `gamma` is checked against the smallest eigenvalue of the symmetric part
/// of `A` at every grid point and midpoint.
pub fn gronwall_check(
    a_path: impl Fn(f64) -> DMatrix<f64>,
    g_path: impl Fn(f64) -> DMatrix<f64>,
    v0: &DMatrix<f64>,
    gamma: impl Fn(f64) -> f64,
    t_end: f64,
    h: f64,
) -> Result<GronwallReport> {
    if h.is_nan() || t_end.is_nan() || h <= 0.0 || t_end < h {
        return Err(Error::InvalidArgument(format!("need 0 < h <= T (got h={h}, T={t_end})")));
    }
    let n_steps = (t_end / h).round() as usize;
    for k in 0..=2 * n_steps {
        let t = k as f64 * 0.5 * h;
        let g = gamma(t);
        let min_eig = min_sym_eigenvalue(&a_path(t));
        if g <= 0.0 || g > min_eig + 1e-12 * (1.0 + min_eig.abs()) {
            return Err(Error::CoercivityViolated { t, gamma: g, min_eig });
        }
    }
    let rhs = |t: f64, v: &DMatrix<f64>| g_path(t) - a_path(t) * v;
    let v0_norm = op_norm_dense(v0)?;
    let mut v = v0.clone();
    let mut int_gamma = 0.0_f64;
    let mut int_forcing = 0.0_f64;
    let mut prev_gamma = gamma(0.0);
    let mut prev_forcing = op_norm_dense(&g_path(0.0))?;
    let mut max_violation = 0.0_f64;
    let mut max_gap = 0.0_f64;
    for k in 1..=n_steps {
        let t = (k - 1) as f64 * h;
        let k1 = rhs(t, &v);
        let k2 = rhs(t + 0.5 * h, &(&v + &k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(&v + &k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(&v + &k3 * h));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);

        // Simpson on [t, t + h]; the midpoint value of I integrates the
        // quadratic through the three gamma samples over the first half.
        let t_next = k as f64 * h;
        let g_mid = gamma(t + 0.5 * h);
        let g_next = gamma(t_next);
        let int_gamma_mid = int_gamma + h / 24.0 * (5.0 * prev_gamma + 8.0 * g_mid - g_next);
        let int_gamma_next = int_gamma + h / 6.0 * (prev_gamma + 4.0 * g_mid + g_next);
        let forcing_mid = op_norm_dense(&g_path(t + 0.5 * h))?;
        let forcing_next = op_norm_dense(&g_path(t_next))?;
        int_forcing += h / 6.0
            * (prev_forcing * int_gamma.exp()
                + 4.0 * forcing_mid * int_gamma_mid.exp()
                + forcing_next * int_gamma_next.exp());
        int_gamma = int_gamma_next;
        prev_gamma = g_next;
        prev_forcing = forcing_next;

        let bound = (-int_gamma).exp() * (int_forcing + v0_norm);
        let excess = op_norm_dense(&v)? - bound;
        max_violation = max_violation.max(excess);
        max_gap = max_gap.max(excess.abs());
    }
    Ok(GronwallReport { max_violation, max_gap })
}

/// Expanded sum
/// `b + ||L0|| + b eps0 (1 + ||B0||) + eps0 ||B0|| (eps0 ||B0|| + ||L0|| + eps0)`,
/// often quoted as the canonical-`R` reduction of `k + b eps0 < 1`.
///
/// It is not equivalent to that condition (see the unit tests); use
/// [`k_condition_under_canonical_r`] for the exact reduction.
pub fn expanded_condition_lhs(b: f64, eps0: f64, b0_norm: f64, lambda0_norm: f64) -> f64 {
    let e = eps0 * b0_norm;
    b + lambda0_norm + b * eps0 * (1.0 + b0_norm) + e * (e + lambda0_norm + eps0)
}

/// With `R` set by [`canonical_r`], `k + b eps0 < 1` reduces to a positive
/// numerator `1 - b - eps0 ||B0|| - ||Lambda0|| - b eps0 > 0`.
pub fn k_condition_under_canonical_r(b: f64, eps0: f64, b0_norm: f64, lambda0_norm: f64) -> bool {
    r_numerator(b, eps0, b0_norm, lambda0_norm) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{initial_inverse, B0Mode};
    use crate::problem::estimate_bounds;
    use crate::schedule::Schedule;

    fn identity_problem(xhat: &[f64]) -> NonlinearProblem {
        let xh = DVector::from_column_slice(xhat);
        let n = xhat.len();
        NonlinearProblem::new("identity", n, move |x| x - &xh)
            .unwrap()
            .with_jacobian(move |_| DMatrix::identity(n, n))
    }

    fn affine(a: DMatrix<f64>, xhat: DVector<f64>) -> NonlinearProblem {
        let n = a.nrows();
        let a2 = a.clone();
        NonlinearProblem::new("affine", n, move |x| &a2 * (x - &xhat))
            .unwrap()
            .with_jacobian(move |_| a.clone())
    }

    #[test]
    fn compute_k_with_exact_inverse() {
        let xhat = HVector::new(vec![0.1, 0.2]).unwrap();
        let p = identity_problem(xhat.as_slice());
        let eps0 = 0.05;
        let b0 = HOperator::from_dmatrix(DMatrix::identity(2, 2) / (1.0 + eps0)).unwrap();
        let (k, l0) = compute_k(1.0, 0.5, 0.2, 0.01, eps0, &b0, &p, &xhat).unwrap();
        assert!(l0 < 1e-15);
        let expect = 2.0 * 1.0 * 0.5 * 0.2 + 0.01 + eps0 / (1.0 + eps0);
        assert!((k - expect).abs() < 1e-14);
        let (_, l0) = compute_k(1.0, 0.5, 0.2, 0.01, eps0, &HOperator::zeros(2).unwrap(), &p, &xhat).unwrap();
        assert!((l0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_r_examples() {
        let r = canonical_r(1.0, 1.0, 0.01, 0.01, 1.0, 0.01).unwrap();
        assert!((r - 0.9699 / 5.03).abs() < 1e-14);
        assert!((r - 0.19283).abs() < 1e-5);
        assert!(matches!(
            canonical_r(1.0, 1.0, 0.01, 0.01, 1.0, 1.0),
            Err(Error::HypothesesUnsatisfiable { .. })
        ));
        let r2 = canonical_r(2.0, 1.0, 0.01, 0.01, 1.0, 0.01).unwrap();
        assert_eq!(r2, r / 2.0);
    }

    #[test]
    fn source_trivial_and_constructive() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let xhat = HVector::new(vec![0.5, 0.5]).unwrap();
        let p = affine(a.clone(), xhat.clone_owned());
        let s = solve_source(&p, &xhat, &xhat, SOURCE_TOL).unwrap();
        assert_eq!(s.w.norm(), 0.0);
        assert!(s.passes);
        let v = DVector::from_column_slice(&[0.3, -0.2]);
        let x0 = HVector::from_dvector(&*xhat - a.tr_mul(&a) * &v).unwrap();
        let s = solve_source(&p, &xhat, &x0, SOURCE_TOL).unwrap();
        assert!((&*s.w - &v).norm() < 1e-12);
        assert!(s.passes);
    }

    #[test]
    fn source_outside_range_fails() {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 1.0, 0.0]));
        let xhat = HVector::new(vec![0.0, 0.0, 0.0]).unwrap();
        let p = affine(a, xhat.clone_owned());
        let x0 = HVector::new(vec![0.0, 0.0, 0.7]).unwrap();
        let s = solve_source(&p, &xhat, &x0, SOURCE_TOL).unwrap();
        assert!((s.residual - 0.7).abs() < 1e-15);
        assert!(!s.passes);
    }

    fn identity_certificate(x0: &[f64]) -> Certificate {
        let xhat = HVector::new(vec![0.0, 0.0]).unwrap();
        let p = identity_problem(xhat.as_slice());
        let x0 = HVector::new(x0.to_vec()).unwrap();
        // b = 0.02, eps0 = 0.01
        let s = Schedule::with_initial(0.01, 5000.0, 1.0).unwrap();
        let b0 = initial_inverse(&p, &x0, s.eps0(), B0Mode::ExactInverse).unwrap();
        let mut bounds = estimate_bounds(&p, &xhat, 1.0, 8, 1).unwrap();
        bounds.n2 = 1.0;
        let b0n = op_norm(&b0).unwrap();
        let l0 = lambda0_norm(&b0, s.eps0(), &p, &xhat).unwrap();
        let r = canonical_r(bounds.n1, bounds.n2, s.b_constant(), s.eps0(), b0n, l0).unwrap();
        certify(&p, &xhat, &x0, &s, &b0, &bounds, r).unwrap()
    }

    #[test]
    fn identity_at_root_certifies() {
        let c = identity_certificate(&[0.0, 0.0]);
        assert_eq!(c.w_norm, 0.0);
        assert!(c.overall, "{c:?}");
        assert!(c.checks.source_drift_bound);
    }

    #[test]
    fn distant_start_fails_envelope() {
        let c = identity_certificate(&[0.5, 0.5]);
        assert!(c.lambda >= c.eps0 / c.x0_distance);
        assert!(!c.checks.start_in_envelope);
        assert!(!c.overall);
    }

    #[test]
    fn riccati_examples() {
        assert!(riccati_envelope_check(&[(0.0, 0.0), (1.0, 0.0)], |_| 1.0).unwrap());
        let samples: Vec<(f64, f64)> = (0..=100).map(|i| i as f64 * 0.1).map(|t| (t, 0.5 * (-t).exp())).collect();
        assert!(riccati_envelope_check(&samples, |t| (t / 2.0).exp()).unwrap());
        assert!(!riccati_envelope_check(&[(0.0, 2.0)], |_| 1.0).unwrap());
        assert!(riccati_envelope_check(&[], |_| 1.0).is_err());
    }

    #[test]
    fn gronwall_constant_case_saturates() {
        let gamma = 0.7;
        let v0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.25, 2.0]);
        let report = gronwall_check(
            |_| DMatrix::identity(2, 2) * gamma,
            |_| DMatrix::zeros(2, 2),
            &v0,
            |_| gamma,
            5.0,
            0.01,
        )
        .unwrap();
        assert!(report.max_gap <= 1e-8, "{report:?}");
    }

    #[test]
    fn gronwall_zero_data() {
        let report = gronwall_check(
            |_| DMatrix::identity(3, 3),
            |_| DMatrix::zeros(3, 3),
            &DMatrix::zeros(3, 3),
            |_| 1.0,
            1.0,
            0.01,
        )
        .unwrap();
        assert_eq!(report.max_violation, 0.0);
        assert_eq!(report.max_gap, 0.0);
    }

    #[test]
    fn gronwall_rejects_overstated_gamma() {
        let e = gronwall_check(
            |t| DMatrix::identity(2, 2) * (1.0 + t),
            |_| DMatrix::zeros(2, 2),
            &DMatrix::identity(2, 2),
            |_| 1.5,
            1.0,
            0.1,
        )
        .unwrap_err();
        match e {
            Error::CoercivityViolated { t, .. } => assert!((t - 0.0).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coercivity_profile_interpolates() {
        let g = coercivity_profile(|t| DMatrix::identity(2, 2) * (1.0 + t), 1.0, 0.5);
        assert!((g(0.0) - 1.0).abs() < 1e-12);
        assert!((g(0.25) - 1.25).abs() < 1e-12);
        assert!((g(1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn expanded_condition_differs_from_k_condition() {
        // b = 0, Lambda0 = 0, eps0 ||B0|| = 0.99, eps0 = 0.1:
        // the numerator is 0.01 > 0, the expanded sum is 0.99^2 + 0.099 > 1.
        assert!(k_condition_under_canonical_r(0.0, 0.1, 9.9, 0.0));
        assert!(expanded_condition_lhs(0.0, 0.1, 9.9, 0.0) > 1.0);
    }
}
