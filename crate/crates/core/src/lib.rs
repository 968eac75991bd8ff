//! Continuous regularized Gauss-Newton solvers for nonlinear, possibly
//! ill-posed equations `F(x) = 0` on `R^n`.
//!
//! Two flows are provided. The direct flow inverts `F'* F' + eps(t) I` at every
//! evaluation; the coupled flow evolves an approximation `B(t)` of that inverse
//! alongside `x(t)`. The [`theory`] module turns the hypotheses of the coupled
//! flow's convergence theorem into a checkable [`theory::Certificate`].

pub mod cli;
pub mod error;
pub mod flow;
pub mod gallery;
pub mod harness;
pub mod hilbert;
pub mod integrator;
pub mod problem;
pub mod schedule;
pub mod theory;

pub use error::{Error, Result};
pub use flow::{B0Mode, FlowDiagnostics, SolverState};
pub use hilbert::{HOperator, HVector};
pub use integrator::{IntegratorConfig, Method, Monitors, Termination, Trajectory};
pub use problem::{BallBounds, NonlinearProblem};
pub use schedule::{Regularization, Schedule};
