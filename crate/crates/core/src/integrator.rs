//! Fixed-step explicit integration of the direct and coupled flows.
//!
//! The coupled state `(x, B)` is advanced as one product state: every Runge-Kutta
//! stage evaluates both equations at the same stage time and stage state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{coupled_rhs_raw, diagnostics_with, direct_rhs_raw, FlowDiagnostics, RootGram, SolverState};
use crate::hilbert::{op_norm_dense, HOperator, HVector};
use crate::problem::NonlinearProblem;
use crate::schedule::Regularization;

/// Threshold on `||x||` or `||B||` above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monitors {
    /// Stop when `||x(t) - xhat|| >= R eps(t)`.
    pub ball: bool,
    /// Stop when `||x||` or `||B||` exceeds [`DIVERGENCE_THRESHOLD`].
    pub divergence: bool,
}

impl Default for Monitors {
    fn default() -> Self {
        Self { ball: false, divergence: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub step_h: f64,
    pub horizon_t: f64,
    pub record_every: usize,
    pub monitors: Monitors,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { method: Method::Rk4, step_h: 0.01, horizon_t: 20.0, record_every: 10, monitors: Monitors::default() }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_h <= 0.0 || !self.step_h.is_finite() {
            return Err(Error::InvalidArgument(format!("step h must be positive, got {}", self.step_h)));
        }
        if self.horizon_t < self.step_h || !self.horizon_t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon T = {} must be at least the step h = {}",
                self.horizon_t, self.step_h
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps to reach the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon_t / self.step_h).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    HorizonReached,
    BallExit,
    Divergence,
    NumericalError,
}

impl Termination {
    pub fn tag(&self) -> &'static str {
        match self {
            Termination::HorizonReached => "horizon_reached",
            Termination::BallExit => "ball_exit",
            Termination::Divergence => "divergence",
            Termination::NumericalError => "numerical_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub state: SolverState,
    pub diagnostics: FlowDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub termination: Termination,
    pub config: IntegratorConfig,
    /// Set when `termination` is `NumericalError`.
    pub message: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory always holds the initial record")
    }
}

/// Time derivative of a flow state: `(x', B')`.
pub type Velocity = (HVector, Option<HOperator>);

fn combine(base: &SolverState, h: f64, weights: &[(f64, &Velocity)], dt: f64) -> Result<SolverState> {
    let mut x = (*base.x).clone();
    for (w, (dx, _)) in weights {
        x.axpy(h * w, dx, 1.0);
    }
    let b = match &base.b {
        Some(b0) => {
            let mut b = (**b0).clone();
            for (w, (_, db)) in weights {
                let db = db.as_ref().ok_or_else(|| Error::InvalidArgument("missing B velocity".into()))?;
                b += &**db * (h * w);
            }
            Some(HOperator::from_dmatrix(b)?)
        }
        None => None,
    };
    Ok(SolverState { t: base.t + dt, x: HVector::from_dvector(x)?, b })
}

/// One explicit Euler or classical RK4 step of size `h` from `st`.
///
/// `rhs` is evaluated at the stage times `t`, `t + h/2`, `t + h`. A non-finite
/// stage or result surfaces as [`Error::NonFinite`].
pub fn step<F>(rhs: F, st: &SolverState, h: f64, method: Method) -> Result<SolverState>
where
    F: Fn(&SolverState) -> Result<Velocity>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    match method {
        Method::Euler => {
            let k1 = rhs(st)?;
            combine(st, h, &[(1.0, &k1)], h)
        }
        Method::Rk4 => {
            let k1 = rhs(st)?;
            let k2 = rhs(&combine(st, h, &[(0.5, &k1)], 0.5 * h)?)?;
            let k3 = rhs(&combine(st, h, &[(0.5, &k2)], 0.5 * h)?)?;
            let k4 = rhs(&combine(st, h, &[(1.0, &k3)], h)?)?;
            combine(st, h, &[(1.0 / 6.0, &k1), (2.0 / 6.0, &k2), (2.0 / 6.0, &k3), (1.0 / 6.0, &k4)], h)
        }
    }
}

/// Velocity of the flow selected by the shape of `st`: coupled when `B` is
/// present, direct otherwise. `x0` anchors the regularization term.
pub fn flow_velocity(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    x0: &HVector,
    st: &SolverState,
) -> Result<Velocity> {
    match &st.b {
        Some(b) => {
            let (dx, db) = coupled_rhs_raw(p, s, x0, &st.x, b, st.t, 1.0)?;
            Ok((HVector::from_dvector(dx)?, Some(HOperator::from_dmatrix(db)?)))
        }
        None => Ok((HVector::from_dvector(direct_rhs_raw(p, s, x0, &st.x, st.t)?)?, None)),
    }
}

fn diverged(st: &SolverState) -> Result<bool> {
    if st.x.norm() > DIVERGENCE_THRESHOLD {
        return Ok(true);
    }
    if let Some(b) = &st.b {
        // Frobenius / sqrt(n) <= spectral <= Frobenius
        let frobenius = b.norm();
        if !frobenius.is_finite() || frobenius > DIVERGENCE_THRESHOLD * (b.dim() as f64).sqrt() {
            return Ok(true);
        }
        if frobenius > DIVERGENCE_THRESHOLD {
            return Ok(op_norm_dense(b)? > DIVERGENCE_THRESHOLD);
        }
    }
    Ok(false)
}

/// Integrates from `st0` (which must sit at `t = 0`) up to `cfg.horizon_t`.
///
/// The flow is coupled when `st0.b` is present and direct otherwise; the anchor
/// `x0` is `st0.x`. Diagnostics are recorded every `cfg.record_every` steps and
/// at the final state. Monitor triggers and numerical failures end the run
/// normally with the matching [`Termination`]; the last record is then the
/// triggering state (for numerical failures, the last finite state).
pub fn integrate(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    st0: &SolverState,
    cfg: &IntegratorConfig,
    xhat: Option<&HVector>,
    radius: Option<f64>,
) -> Result<Trajectory> {
    cfg.validate()?;
    if st0.x.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: st0.x.dim() });
    }
    if let Some(b) = &st0.b {
        if b.dim() != p.dim() {
            return Err(Error::DimensionMismatch { expected: p.dim(), found: b.dim() });
        }
    }
    if let Some(xh) = xhat {
        if xh.dim() != p.dim() {
            return Err(Error::DimensionMismatch { expected: p.dim(), found: xh.dim() });
        }
    }
    let ball = if cfg.monitors.ball {
        match (xhat, radius) {
            (Some(xh), Some(r)) if r > 0.0 => Some((xh, r)),
            _ => {
                return Err(Error::InvalidArgument(
                    "ball monitor needs both the known solution and a positive radius R".into(),
                ))
            }
        }
    } else {
        None
    };
    let root = xhat.map(|xh| RootGram::new(p, xh).map(|g| (xh, g))).transpose()?;
    let root_ref = root.as_ref().map(|(xh, g)| (*xh, g));

    let x0 = st0.x.clone();
    let h = cfg.step_h;
    let n_steps = cfg.steps();
    let mut state = SolverState { t: 0.0, ..st0.clone() };
    let mut records = Vec::with_capacity(n_steps / cfg.record_every + 2);

    let record = |st: &SolverState, records: &mut Vec<Record>| -> Result<()> {
        let diagnostics = diagnostics_with(p, s, st, root_ref)?;
        records.push(Record { state: st.clone(), diagnostics });
        Ok(())
    };
    let numerical = |records: Vec<Record>, e: Error| Trajectory {
        records,
        termination: Termination::NumericalError,
        config: *cfg,
        message: Some(e.to_string()),
    };
    let exited = |st: &SolverState| -> Result<bool> {
        match ball {
            Some((xh, r)) => Ok((&*st.x - &**xh).norm() >= r * s.eps(st.t)?),
            None => Ok(false),
        }
    };

    record(&state, &mut records)?;
    if exited(&state)? {
        return Ok(Trajectory { records, termination: Termination::BallExit, config: *cfg, message: None });
    }

    for k in 1..=n_steps {
        let next = step(|st| flow_velocity(p, s, &x0, st), &state, h, cfg.method);
        let mut next = match next {
            Ok(st) => st,
            Err(e) => {
                if records.last().map(|r| r.state.t) != Some(state.t) {
                    if let Err(e2) = record(&state, &mut records) {
                        return Ok(numerical(records, e2));
                    }
                }
                return Ok(numerical(records, e));
            }
        };
        // pin the grid time to avoid drift from repeated addition
        next.t = k as f64 * h;
        state = next;

        let mut termination = None;
        if cfg.monitors.divergence && diverged(&state)? {
            termination = Some(Termination::Divergence);
        } else if exited(&state)? {
            termination = Some(Termination::BallExit);
        }
        if termination.is_some() || k % cfg.record_every == 0 || k == n_steps {
            if let Err(e) = record(&state, &mut records) {
                if termination == Some(Termination::Divergence) {
                    // diagnostics of a blown-up state may not be computable;
                    // the last record is then the previous good state
                    return Ok(Trajectory {
                        records,
                        termination: Termination::Divergence,
                        config: *cfg,
                        message: Some(e.to_string()),
                    });
                }
                return Ok(numerical(records, e));
            }
        }
        if let Some(termination) = termination {
            return Ok(Trajectory { records, termination, config: *cfg, message: None });
        }
    }
    Ok(Trajectory { records, termination: Termination::HorizonReached, config: *cfg, message: None })
}

fn endpoint(traj: &Trajectory) -> Result<&SolverState> {
    if traj.termination != Termination::HorizonReached {
        return Err(Error::InvalidArgument(format!(
            "order study run ended with {} before the horizon",
            traj.termination.tag()
        )));
    }
    Ok(&traj.last().state)
}

fn state_distance(a: &SolverState, b: &SolverState) -> f64 {
    let dx = (&*a.x - &*b.x).norm_squared();
    let db = match (&a.b, &b.b) {
        (Some(ba), Some(bb)) => (&**ba - &**bb).norm_squared(),
        _ => 0.0,
    };
    (dx + db).sqrt()
}

/// Endpoint errors of `cfg.method` at each step size in `steps` (descending)
/// against an RK4 reference at `min(steps) / 4`. The error is the Euclidean
/// norm over the full state `(x, vec B)`.
pub fn convergence_order(
    p: &NonlinearProblem,
    s: &dyn Regularization,
    st0: &SolverState,
    cfg: &IntegratorConfig,
    steps: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if steps.is_empty() {
        return Err(Error::InvalidArgument("no step sizes given".into()));
    }
    if steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("step sizes must be strictly descending".into()));
    }
    let base = IntegratorConfig {
        record_every: usize::MAX,
        monitors: Monitors { ball: false, divergence: false },
        ..*cfg
    };
    let smallest = steps[steps.len() - 1];
    let reference_cfg = IntegratorConfig { method: Method::Rk4, step_h: smallest / 4.0, ..base };
    let reference = integrate(p, s, st0, &reference_cfg, None, None)?;
    let reference_end = endpoint(&reference)?;
    steps
        .iter()
        .map(|&h| {
            let traj = integrate(p, s, st0, &IntegratorConfig { step_h: h, ..base }, None, None)?;
            Ok((h, state_distance(endpoint(&traj)?, reference_end)))
        })
        .collect()
}

/// Convenience for tests and tools: the B-block of every record as dense
/// matrices.
pub fn b_path(traj: &Trajectory) -> Vec<(f64, DMatrix<f64>)> {
    traj.records
        .iter()
        .filter_map(|r| r.state.b.as_ref().map(|b| (r.state.t, (**b).clone())))
        .collect()
}
