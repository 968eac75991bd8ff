//! Finite-dimensional real Hilbert space `H = R^n` with the Euclidean inner
//! product.
//!
//! [`HVector`] and [`HOperator`] are thin validated wrappers over `nalgebra`
//! dense storage. Both reject empty and non-finite data at construction, so
//! any value of these types is a legal element of `H` or `L(H)`. Read access to
//! the underlying storage goes through `Deref`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Element of `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct HVector(DVector<f64>);

/// Dense square operator on `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct HOperator(DMatrix<f64>);

fn first_non_finite<'a>(mut it: impl Iterator<Item = &'a f64>) -> Option<usize> {
    it.position(|v| !v.is_finite())
}

impl HVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(entries))
    }

    pub fn from_dvector(v: DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(index) = first_non_finite(v.iter()) {
            return Err(Error::NonFinite { what: "vector", index });
        }
        Ok(Self(v))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_dvector(DVector::zeros(n))
    }

    /// The `j`-th standard basis vector of `R^n`.
    pub fn basis(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(Error::InvalidArgument(format!("basis index {j} out of range for dimension {n}")));
        }
        let mut v = DVector::zeros(n);
        v[j] = 1.0;
        Self::from_dvector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for HVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl HOperator {
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::Empty);
        }
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        if let Some(index) = first_non_finite(m.iter()) {
            return Err(Error::NonFinite { what: "operator", index });
        }
        Ok(Self(m))
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(n: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: rows.len() });
        }
        Self::from_dmatrix(DMatrix::from_row_slice(n, n, rows))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_dmatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_dmatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::from_dmatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for HOperator {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Euclidean inner product `(u, v)`.
pub fn inner(u: &HVector, v: &HVector) -> Result<f64> {
    check_dim(u.dim(), v.dim())?;
    Ok(u.0.dot(&v.0))
}

pub fn apply(a: &HOperator, v: &HVector) -> Result<HVector> {
    check_dim(a.dim(), v.dim())?;
    HVector::from_dvector(&a.0 * &v.0)
}

/// In `R^n` with the Euclidean inner product the adjoint is the transpose.
pub fn adjoint(a: &HOperator) -> HOperator {
    HOperator(a.0.transpose())
}

/// In-place Cholesky factorization of a symmetric matrix. Only the lower
/// triangle is read. On failure reports the first non-positive pivot.
pub(crate) fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L L^T y = rhs` given the lower Cholesky factor.
pub(crate) fn cholesky_solve(l: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = rhs.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `(A + eps I) y = rhs` through a Cholesky factorization.
///
/// `A + eps I` must be symmetric positive definite; in both flows `A` is a
/// Gram operator `J^T J`, which makes this hold for any `eps > 0`.
pub fn solve_regularized(a: &HOperator, eps: f64, rhs: &HVector) -> Result<HVector> {
    check_dim(a.dim(), rhs.dim())?;
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("regularization eps must be positive, got {eps}")));
    }
    let shifted = regularized(&a.0, eps);
    let l = cholesky_lower(&shifted)?;
    HVector::from_dvector(cholesky_solve(&l, &rhs.0))
}

/// `(A + eps I)^{-1}`, assembled column by column from one factorization.
pub fn regularized_inverse(a: &HOperator, eps: f64) -> Result<HOperator> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("regularization eps must be positive, got {eps}")));
    }
    let n = a.dim();
    let l = cholesky_lower(&regularized(&a.0, eps))?;
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        inv.set_column(j, &cholesky_solve(&l, &e));
    }
    HOperator::from_dmatrix(inv)
}

fn regularized(a: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += eps;
    }
    m
}

const OP_NORM_SEED: u64 = 0x005e_ed0f_4e0e;
const OP_NORM_MAX_ITER: usize = 20_000;
const OP_NORM_ITER_PER_LEVEL: usize = 200;
const OP_NORM_RTOL: f64 = 1e-12;

/// Spectral norm by power iteration on `A^T A`.
///
/// The start vector is drawn from a fixed-seed generator, so the result is
/// deterministic. Iteration stops once the Rayleigh quotient `||A v||^2`
/// changes by less than `1e-12` relative, comfortably inside the `1e-6`
/// accuracy target. When the top singular values are clustered the iteration
/// runs on `(A^T A)^(2^s)`, squaring again every
/// `OP_NORM_ITER_PER_LEVEL` steps, which raises the convergence factor
/// `(s2/s1)^2` to the power `2^s`.
pub fn op_norm(a: &HOperator) -> Result<f64> {
    op_norm_dense(&a.0)
}

pub(crate) fn op_norm_dense(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.ncols();
    let scale = a.amax();
    if scale == 0.0 {
        return Ok(0.0);
    }
    if !scale.is_finite() {
        return Err(Error::NonFinite { what: "operator", index: a.iter().position(|v| !v.is_finite()).unwrap_or(0) });
    }
    // work with entries of unit size so A^T A v cannot overflow
    let a = &(a / scale);
    let mut m = a.tr_mul(a);
    let mut rng = ChaCha8Rng::seed_from_u64(OP_NORM_SEED);
    let draw = |rng: &mut ChaCha8Rng| {
        let v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let norm = v.norm();
        v / norm
    };
    let mut v = draw(&mut rng);
    let mut prev = 0.0_f64;
    for it in 1..=OP_NORM_MAX_ITER {
        let w = &m * &v;
        let wn = w.norm();
        if wn == 0.0 {
            // v lies in the null space of A; redraw.
            v = draw(&mut rng);
            continue;
        }
        v = w / wn;
        let rq = (a * &v).norm_squared();
        if (rq - prev).abs() <= OP_NORM_RTOL * rq {
            return Ok(scale * rq.sqrt());
        }
        prev = rq;
        if it % OP_NORM_ITER_PER_LEVEL == 0 {
            m = &m * &m;
            let f = m.norm();
            if f > 0.0 && f.is_finite() {
                m /= f;
            }
        }
    }
    Err(Error::NoConvergence { iterations: OP_NORM_MAX_ITER, estimate: scale * prev.sqrt() })
}
