//! Nonlinear operators `F: H -> H` with derivatives and local bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{op_norm_dense, HOperator, HVector};

pub type EvalFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;

/// Default central-difference step used when a problem has no analytic
/// Jacobian.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Multiplicative safety factor applied to sampled derivative bounds.
pub const BOUND_INFLATION: f64 = 1.1;

/// A nonlinear operator with optional analytic Jacobian and known root.
#[derive(Clone)]
pub struct NonlinearProblem {
    pub label: String,
    dim: usize,
    eval: EvalFn,
    jac: Option<JacFn>,
    admissible: Option<DomainFn>,
    known_solution: Option<HVector>,
}

impl fmt::Debug for NonlinearProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearProblem")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jac.is_some())
            .field("known_solution", &self.known_solution)
            .finish_non_exhaustive()
    }
}

impl NonlinearProblem {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        eval: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty);
        }
        Ok(Self {
            label: label.into(),
            dim,
            eval: Arc::new(eval),
            jac: None,
            admissible: None,
            known_solution: None,
        })
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn with_domain(mut self, admissible: impl Fn(&DVector<f64>) -> bool + Send + Sync + 'static) -> Self {
        self.admissible = Some(Arc::new(admissible));
        self
    }

    /// Attaches a known root. Fails if `||F(xhat)|| > 1e-8 (1 + ||xhat||)`.
    pub fn with_known_solution(mut self, xhat: HVector) -> Result<Self> {
        if xhat.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: xhat.dim() });
        }
        let r = eval_f(&self, &xhat)?;
        if r.norm() > 1e-8 * (1.0 + xhat.norm()) {
            return Err(Error::InvalidArgument(format!(
                "known solution of `{}` has residual {:e}",
                self.label,
                r.norm()
            )));
        }
        self.known_solution = Some(xhat);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn known_solution(&self) -> Option<&HVector> {
        self.known_solution.as_ref()
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn is_admissible(&self, x: &DVector<f64>) -> bool {
        self.admissible.as_ref().is_none_or(|f| f(x))
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        if !self.is_admissible(x) {
            return Err(Error::Inadmissible(self.label.clone()));
        }
        Ok(())
    }

    pub(crate) fn eval_raw(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        let y = (self.eval)(x);
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: y.len() });
        }
        if let Some(index) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "F(x)", index });
        }
        Ok(y)
    }

    pub(crate) fn jacobian_raw(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.jac {
            Some(jac) => {
                self.check_input(x)?;
                let j = jac(x);
                if j.nrows() != self.dim || j.ncols() != self.dim {
                    return Err(Error::DimensionMismatch { expected: self.dim, found: j.nrows() });
                }
                if let Some(index) = j.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: "F'(x)", index });
                }
                Ok(j)
            }
            None => self.fd_jacobian_raw(x, DEFAULT_FD_STEP),
        }
    }

    fn fd_jacobian_raw(&self, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        if h <= 0.0 {
            return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
        }
        let n = self.dim;
        let mut j = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let col = (self.eval_raw(&xp)? - self.eval_raw(&xm)?) / (2.0 * h);
            j.set_column(c, &col);
        }
        Ok(j)
    }
}

/// `F(x)`.
pub fn eval_f(p: &NonlinearProblem, x: &HVector) -> Result<HVector> {
    HVector::from_dvector(p.eval_raw(x)?)
}

/// `F'(x)`; falls back to central differences with [`DEFAULT_FD_STEP`] when
/// the problem has no analytic Jacobian.
pub fn jacobian(p: &NonlinearProblem, x: &HVector) -> Result<HOperator> {
    HOperator::from_dmatrix(p.jacobian_raw(x)?)
}

/// Column-by-column central differences `(F(x + h e_j) - F(x - h e_j)) / 2h`.
pub fn fd_jacobian(p: &NonlinearProblem, x: &HVector, h: f64) -> Result<HOperator> {
    if x.dim() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, found: x.dim() });
    }
    HOperator::from_dmatrix(p.fd_jacobian_raw(x, h)?)
}

/// Sampled bounds `||F'(x)|| <= n1`, `||F''(x)|| <= n2` on a closed ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallBounds {
    pub center: HVector,
    pub radius: f64,
    pub n1: f64,
    pub n2: f64,
    pub samples: usize,
    pub inflation: f64,
}

/// Number of unit directions probed per sample point for the `F''` estimate.
pub const DIRECTIONS_PER_SAMPLE: usize = 4;

/// Estimates `N1 = sup ||F'||` and `N2 = sup ||F''||` on the ball
/// `{x : ||x - center|| <= radius}` by sampling.
///
/// Sample points are uniform in the ball (the center is always included);
/// `||F''(x)||` is approximated by `||(F'(x + delta d) - F'(x)) / delta||`
/// over random unit `d`, `delta = 1e-4 radius`. Both maxima are multiplied
/// by [`BOUND_INFLATION`]. Output depends only on `seed`.
pub fn estimate_bounds(
    p: &NonlinearProblem,
    center: &HVector,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<BallBounds> {
    if radius <= 0.0 || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    if center.dim() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, found: center.dim() });
    }
    let n = p.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| -> DVector<f64> {
        loop {
            let d = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = d.norm();
            if norm > 0.0 {
                return d / norm;
            }
        }
    };
    // Draw everything up front so the parallel evaluation below cannot
    // perturb the sample sequence.
    let plan: Vec<(DVector<f64>, Vec<DVector<f64>>)> = (0..samples)
        .map(|i| {
            let offset = if i == 0 {
                DVector::zeros(n)
            } else {
                let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
                unit(&mut rng) * r
            };
            let dirs = (0..DIRECTIONS_PER_SAMPLE).map(|_| unit(&mut rng)).collect();
            (&**center + offset, dirs)
        })
        .collect();
    let delta = 1e-4 * radius;
    let per_sample: Vec<Result<(f64, f64)>> = plan
        .par_iter()
        .map(|(x, dirs)| {
            let jx = p.jacobian_raw(x)?;
            let n1 = op_norm_dense(&jx)?;
            let mut n2 = 0.0_f64;
            for d in dirs {
                let jd = p.jacobian_raw(&(x + d * delta))?;
                n2 = n2.max(op_norm_dense(&((jd - &jx) / delta))?);
            }
            Ok((n1, n2))
        })
        .collect();
    let mut n1 = 0.0_f64;
    let mut n2 = 0.0_f64;
    for r in per_sample {
        let (a, b) = r?;
        n1 = n1.max(a);
        n2 = n2.max(b);
    }
    Ok(BallBounds {
        center: center.clone(),
        radius,
        n1: BOUND_INFLATION * n1,
        n2: BOUND_INFLATION * n2,
        samples,
        inflation: BOUND_INFLATION,
    })
}
