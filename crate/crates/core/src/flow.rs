//! Right-hand sides of the two continuous regularized Gauss-Newton methods.
//!
//! * direct flow: `x' = -(J*J + eps I)^{-1} (J* F(x) + eps (x - x0))`, one SPD
//!   solve per evaluation;
//! * coupled flow: `x' = -B (J* F(x) + eps (x - x0))`,
//!   `B' = -((J*J + eps I) B - I)`, which tracks the regularized inverse
//!   instead of computing it.
//!
//! `J = F'(x(t))`, `eps = eps(t)` and `x0` is always the initial iterate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{cholesky_lower, cholesky_solve, op_norm_dense, regularized_inverse, HOperator, HVector};
use crate::problem::NonlinearProblem;
use crate::schedule::Regularization;

/// State `(t, x, B)` of a flow; `b` is `None` for the direct flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub t: f64,
    pub x: HVector,
    pub b: Option<HOperator>,
}

impl SolverState {
    pub fn direct(x0: HVector) -> Self {
        Self { t: 0.0, x: x0, b: None }
    }

    pub fn coupled(x0: HVector, b0: HOperator) -> Result<Self> {
        if b0.dim() != x0.dim() {
            return Err(Error::DimensionMismatch { expected: x0.dim(), found: b0.dim() });
        }
        Ok(Self { t: 0.0, x: x0, b: Some(b0) })
    }
}

/// Norms recorded along a trajectory. Optional fields need either `B` or `xhat`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowDiagnostics {
    pub eps: f64,
    pub residual_norm: f64,
    pub err_norm: Option<f64>,
    pub b_norm: Option<f64>,
    /// `||I - B (F'(xhat)* F'(xhat) + eps I)||`, always at the fixed root.
    pub lambda_norm: Option<f64>,
    /// `||(F'(x)* F'(x) + eps I) B - I||` at the current iterate.
    pub inverse_residual: Option<f64>,
    /// `||B F'(xhat)* F'(xhat)||`.
    pub d_norm: Option<f64>,
}

/// How `B(0)` is chosen for the coupled flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum B0Mode {
    /// `(F'(x0)* F'(x0) + eps(0) I)^{-1}`.
    #[default]
    ExactInverse,
    /// `I / (||F'(x0)||^2 + eps(0))`; no initial factorization.
    ScaledIdentity,
}

fn gram(j: &DMatrix<f64>) -> DMatrix<f64> {
    j.tr_mul(j)
}

fn shifted_gram(j: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let mut m = gram(j);
    for i in 0..m.nrows() {
        m[(i, i)] += eps;
    }
    m
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")))
    }
}

/// `F'(x)* F'(x) + eps I`.
pub fn gauss_newton_operator(p: &NonlinearProblem, x: &HVector, eps: f64) -> Result<HOperator> {
    check_eps(eps)?;
    HOperator::from_dmatrix(shifted_gram(&p.jacobian_raw(x)?, eps))
}

/// `J* F(x) + eps (x - x0)`, the bracket shared by both flows.
fn gradient_term(j: &DMatrix<f64>, fx: &DVector<f64>, eps: f64, x: &DVector<f64>, x0: &DVector<f64>) -> DVector<f64> {
    j.tr_mul(fx) + (x - x0) * eps
}

pub(crate) fn direct_rhs_raw(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    x0: &DVector<f64>,
    x: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let eps = s.eps(t)?;
    check_eps(eps)?;
    let j = p.jacobian_raw(x)?;
    let fx = p.eval_raw(x)?;
    let g = gradient_term(&j, &fx, eps, x, x0);
    let l = cholesky_lower(&shifted_gram(&j, eps))?;
    Ok(-cholesky_solve(&l, &g))
}

pub(crate) fn coupled_rhs_raw(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    x0: &DVector<f64>,
    x: &DVector<f64>,
    b: &DMatrix<f64>,
    t: f64,
    gain: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let eps = s.eps(t)?;
    check_eps(eps)?;
    let j = p.jacobian_raw(x)?;
    let fx = p.eval_raw(x)?;
    let dx = -(b * gradient_term(&j, &fx, eps, x, x0));
    let mut db = shifted_gram(&j, eps) * b;
    for i in 0..db.nrows() {
        db[(i, i)] -= 1.0;
    }
    Ok((dx, db * -gain))
}

/// Direct-flow velocity at `(x, t)`.
pub fn direct_rhs(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    x0: &HVector,
    x: &HVector,
    t: f64,
) -> Result<HVector> {
    check_dims(p, x0, x)?;
    HVector::from_dvector(direct_rhs_raw(p, s, x0, x, t)?)
}

fn check_dims(p: &NonlinearProblem, x0: &HVector, x: &HVector) -> Result<()> {
    for d in [x0.dim(), x.dim()] {
        if d != p.dim() {
            return Err(Error::DimensionMismatch { expected: p.dim(), found: d });
        }
    }
    Ok(())
}

/// Coupled-flow velocities `(x', B')` with unit gain on the `B` equation.
pub fn coupled_rhs(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    x0: &HVector,
    st: &SolverState,
) -> Result<(HVector, HOperator)> {
    coupled_rhs_with_gain(p, s, x0, st, 1.0)
}

/// As [`coupled_rhs`] but with `B' = -gain ((J*J + eps I) B - I)`. All
/// certificate computations assume `gain = 1`.
pub fn coupled_rhs_with_gain(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    x0: &HVector,
    st: &SolverState,
    gain: f64,
) -> Result<(HVector, HOperator)> {
    check_dims(p, x0, &st.x)?;
    let b = st
        .b
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("coupled flow needs an operator B".into()))?;
    if b.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: b.dim() });
    }
    let (dx, db) = coupled_rhs_raw(p, s, x0, &st.x, b, st.t, gain)?;
    Ok((HVector::from_dvector(dx)?, HOperator::from_dmatrix(db)?))
}

/// Initial operator `B(0)` for the coupled flow.
pub fn initial_inverse(p: &NonlinearProblem, x0: &HVector, eps0: f64, mode: B0Mode) -> Result<HOperator> {
    check_eps(eps0)?;
    let j = p.jacobian_raw(x0)?;
    match mode {
        B0Mode::ExactInverse => regularized_inverse(&HOperator::from_dmatrix(gram(&j))?, eps0),
        B0Mode::ScaledIdentity => {
            let nj = op_norm_dense(&j)?;
            let n = p.dim();
            HOperator::from_dmatrix(DMatrix::identity(n, n) / (nj * nj + eps0))
        }
    }
}

/// Precomputed `F'(xhat)* F'(xhat)` for repeated diagnostics along a run.
#[derive(Debug, Clone)]
pub struct RootGram(DMatrix<f64>);

impl RootGram {
    pub fn new(p: &NonlinearProblem, xhat: &HVector) -> Result<Self> {
        Ok(Self(gram(&p.jacobian_raw(xhat)?)))
    }
}

/// `Lambda = I - B (F'(xhat)* F'(xhat) + eps I)`.
pub fn lambda_operator(b: &HOperator, root_gram: &RootGram, eps: f64) -> Result<HOperator> {
    HOperator::from_dmatrix(lambda_raw(b, &root_gram.0, eps))
}

fn lambda_raw(b: &DMatrix<f64>, g: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let n = b.nrows();
    let mut m = g.clone();
    for i in 0..n {
        m[(i, i)] += eps;
    }
    DMatrix::identity(n, n) - b * m
}

/// Diagnostics at `st`. Fields depending on `xhat` or `B` are `None` when
/// those are unavailable.
pub fn diagnostics(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    st: &SolverState,
    xhat: Option<&HVector>,
) -> Result<FlowDiagnostics> {
    let root = xhat.map(|xh| RootGram::new(p, xh).map(|g| (xh, g))).transpose()?;
    diagnostics_with(p, s, st, root.as_ref().map(|(xh, g)| (*xh, g)))
}

pub(crate) fn diagnostics_with(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    st: &SolverState,
    root: Option<(&HVector, &RootGram)>,
) -> Result<FlowDiagnostics> {
    let eps = s.eps(st.t)?;
    let x = &*st.x;
    let mut d = FlowDiagnostics {
        eps,
        residual_norm: p.eval_raw(x)?.norm(),
        ..Default::default()
    };
    if let Some((xh, _)) = root {
        d.err_norm = Some((x - &**xh).norm());
    }
    if let Some(b) = &st.b {
        let b = &**b;
        let n = b.nrows();
        d.b_norm = Some(op_norm_dense(b)?);
        let j = p.jacobian_raw(x)?;
        d.inverse_residual = Some(op_norm_dense(&(shifted_gram(&j, eps) * b - DMatrix::identity(n, n)))?);
        if let Some((_, g)) = root {
            d.lambda_norm = Some(op_norm_dense(&lambda_raw(b, &g.0, eps))?);
            d.d_norm = Some(op_norm_dense(&(b * &g.0))?);
        }
    }
    Ok(d)
}
