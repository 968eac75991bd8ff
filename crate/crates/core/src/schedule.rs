//! Regularization schedules `eps(t)`.
//!
//! The built-in family is the power law `eps(t) = c0 (c1 + t)^(-a)`; its decay
//! constant `b` (the smallest `b` with `|eps'(t)| <= b eps(t)^2` on `t >= 0`) is
//! returned in closed form. [`CustomSchedule`] lets callers plug in their own
//! `(eps, eps', b)` triple, validated on a grid at construction.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A time-dependent regularization parameter `eps(t) > 0`.
pub trait Regularization: Send + Sync {
    fn eps(&self, t: f64) -> Result<f64>;
    fn eps_dot(&self, t: f64) -> Result<f64>;
    /// A constant `b` with `|eps'(t)| <= b eps(t)^2` for all `t >= 0`.
    fn b_constant(&self) -> f64;
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("schedule time must be finite and nonnegative, got {t}")))
    }
}

/// Power-law schedule `eps(t) = c0 (c1 + t)^(-a)` with `c0, c1 > 0`, `0 < a <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub c0: f64,
    pub c1: f64,
    pub a: f64,
}

impl Schedule {
    pub fn new(c0: f64, c1: f64, a: f64) -> Result<Self> {
        let s = Self { c0, c1, a };
        s.validate()?;
        Ok(s)
    }

    /// `eps(t) = eps0 (c1 + t)^(-a) c1^a`, i.e. the power law rescaled so that
    /// `eps(0) = eps0`.
    pub fn with_initial(eps0: f64, c1: f64, a: f64) -> Result<Self> {
        Self::new(eps0 * c1.powf(a), c1, a)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c0 > 0.0
            && self.c1 > 0.0
            && self.a > 0.0
            && self.a <= 1.0
            && self.c0.is_finite()
            && self.c1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "schedule requires c0 > 0, c1 > 0, 0 < a <= 1 (got c0={}, c1={}, a={})",
                self.c0, self.c1, self.a
            )))
        }
    }

    pub fn eps0(&self) -> f64 {
        self.c0 * self.c1.powf(-self.a)
    }
}

impl Default for Schedule {
    /// `eps(t) = 0.1 / (1 + t)`.
    fn default() -> Self {
        Self { c0: 0.1, c1: 1.0, a: 1.0 }
    }
}

impl Regularization for Schedule {
    fn eps(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.c0 * (self.c1 + t).powf(-self.a))
    }

    fn eps_dot(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(-self.a * self.c0 * (self.c1 + t).powf(-self.a - 1.0))
    }

    /// `|eps'|/eps^2 = (a/c0) (c1+t)^(a-1)`, nonincreasing in `t` for `a <= 1`,
    /// so the supremum sits at `t = 0`.
    fn b_constant(&self) -> f64 {
        (self.a / self.c0) * self.c1.powf(self.a - 1.0)
    }
}

/// `eps(t) = eps0` for all `t`. Not a valid schedule for the convergence
/// theorem (it does not tend to zero); used to probe fixed-regularization
/// limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenSchedule {
    pub eps0: f64,
}

impl Regularization for FrozenSchedule {
    fn eps(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.eps0)
    }

    fn eps_dot(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(0.0)
    }

    fn b_constant(&self) -> f64 {
        0.0
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied schedule. Construction checks positivity, strict decrease
/// and the decay certificate `|eps'| <= b eps^2` on a grid.
#[derive(Clone)]
pub struct CustomSchedule {
    eps: ScalarFn,
    eps_dot: ScalarFn,
    b: f64,
}

impl fmt::Debug for CustomSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSchedule").field("b", &self.b).finish_non_exhaustive()
    }
}

impl CustomSchedule {
    pub fn new(
        eps: impl Fn(f64) -> f64 + Send + Sync + 'static,
        eps_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b: f64,
        grid: &[f64],
    ) -> Result<Self> {
        if b <= 0.0 {
            return Err(Error::InvalidArgument(format!("decay constant b must be positive, got {b}")));
        }
        let mut prev: Option<f64> = None;
        for &t in grid {
            check_time(t)?;
            let e = eps(t);
            let d = eps_dot(t);
            if e <= 0.0 || !e.is_finite() || !d.is_finite() {
                return Err(Error::InvalidArgument(format!("schedule not positive and finite at t={t}")));
            }
            if let Some(p) = prev {
                if e >= p {
                    return Err(Error::InvalidArgument(format!("schedule not strictly decreasing at t={t}")));
                }
            }
            if d.abs() > b * e * e * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "decay certificate |eps'| <= b eps^2 violated at t={t}"
                )));
            }
            prev = Some(e);
        }
        Ok(Self { eps: Arc::new(eps), eps_dot: Arc::new(eps_dot), b })
    }
}

impl Regularization for CustomSchedule {
    fn eps(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok((self.eps)(t))
    }

    fn eps_dot(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok((self.eps_dot)(t))
    }

    fn b_constant(&self) -> f64 {
        self.b
    }
}
