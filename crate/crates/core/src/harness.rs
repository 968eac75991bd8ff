//! Experiment batteries: parameter sweeps with optional data noise, and the
//! verification suites behind `regflow verify`.

use std::fmt::Write as _;
use std::time::Instant;

use clap::ValueEnum;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cli::{simulate, RunConfig};
use crate::error::{Error, Result};
use crate::flow::SolverState;
use crate::gallery::{compliant_instance, compliant_nonlinear_instance, CompliantInstance};
use crate::hilbert::op_norm;
use crate::integrator::{convergence_order, integrate, IntegratorConfig, Method, Monitors, Termination};
use crate::schedule::Regularization;
use crate::theory::{gronwall_check, min_sym_eigenvalue, riccati_envelope_check, GronwallReport};

/// `eps(0)` values of the sensitivity preset.
pub const EPS0_RANGE: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    /// Dotted configuration key, e.g. `schedule.eps0`.
    pub param: String,
    pub values: Vec<f64>,
    /// Noise seeds; one run per value and seed.
    pub seeds: Vec<u64>,
    pub noise: f64,
}

impl SweepSpec {
    pub fn new(base: RunConfig, param: impl Into<String>, values: Vec<f64>, seeds: Vec<u64>, noise: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        if noise < 0.0 || !noise.is_finite() {
            return Err(Error::Config(format!("noise must be finite and nonnegative, got {noise}")));
        }
        Ok(Self { base, param: param.into(), values, seeds, noise })
    }

    /// Configuration of the run for `(value, seed)`.
    pub fn config_for(&self, value: f64, seed: u64) -> Result<RunConfig> {
        let mut base = self.base.clone();
        base.noise = self.noise;
        base.noise_seed = seed;
        base.output = Default::default();
        base.with_overrides(&[(self.param.clone(), toml::Value::Float(value))])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param_value: f64,
    pub seed: u64,
    pub final_err: Option<f64>,
    pub final_residual: Option<f64>,
    /// Termination tag, or `error` when the run could not be set up.
    pub termination: String,
    pub wall_ms: f64,
    pub message: Option<String>,
}

/// Runs every `(value, seed)` pair in parallel. Rows come back in value-major,
/// seed-minor order; failed runs become rows tagged `error`.
pub fn sweep(spec: &SweepSpec) -> Vec<SweepRow> {
    let jobs: Vec<(f64, u64)> = spec.values.iter().flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s))).collect();
    jobs.par_iter()
        .map(|&(value, seed)| {
            let start = Instant::now();
            let outcome = spec.config_for(value, seed).and_then(|cfg| simulate(&cfg));
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok(o) => SweepRow {
                    param_value: value,
                    seed,
                    final_err: Some(o.final_err()),
                    final_residual: Some(o.final_residual()),
                    termination: o.trajectory.termination.tag().to_string(),
                    wall_ms,
                    message: o.trajectory.message.clone(),
                },
                Err(e) => SweepRow {
                    param_value: value,
                    seed,
                    final_err: None,
                    final_residual: None,
                    termination: "error".into(),
                    wall_ms,
                    message: Some(e.to_string()),
                },
            }
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param_value,seed,final_err,final_residual,termination,wall_ms\n");
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{:.16e},{},{},{},{},{:.3}",
            r.param_value,
            r.seed,
            opt(r.final_err),
            opt(r.final_residual),
            r.termination,
            r.wall_ms
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Riccati envelope and operator Gronwall bound.
    Lemmas,
    /// Certified instances integrated against the theorem's bounds.
    Certificate,
    /// Step-halving error ratios of the integrators.
    Order,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckRow {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    fn from_result(name: impl Into<String>, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

pub fn format_table(rows: &[CheckRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(out, "{:<width$}  {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    out
}

pub fn verify(suite: Suite, seed: u64) -> Vec<CheckRow> {
    match suite {
        Suite::Lemmas => lemma_battery(seed),
        Suite::Certificate => certificate_battery(seed),
        Suite::Order => order_battery(seed),
    }
}

/// Tolerance on the excess of `||V||` over the Gronwall envelope.
pub const GRONWALL_TOL: f64 = 1e-6;
/// Tolerance on the gap in the saturating constant-coefficient case.
pub const GRONWALL_SATURATION_TOL: f64 = 1e-8;

fn random_matrix(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// One randomized coercive path `A(t) = g0 I + P + t/(1+t) Q + S sin(t)` with
/// `P, Q` positive semidefinite and `S` skew, forcing `G(t) = C0 + C1 cos(3t)`,
/// checked on `[0, 2]` with `h = 0.01`. Returns the Gronwall report.
pub fn random_gronwall_case(n: usize, rng: &mut ChaCha8Rng) -> Result<GronwallReport> {
    let g0 = 0.1 + rng.random::<f64>();
    let p = {
        let m = random_matrix(n, 0.5, rng);
        m.tr_mul(&m)
    };
    let q = {
        let m = random_matrix(n, 0.5, rng);
        m.tr_mul(&m)
    };
    let s = {
        let m = random_matrix(n, 1.0, rng);
        &m - m.transpose()
    };
    let c0 = random_matrix(n, 1.0, rng);
    let c1 = random_matrix(n, 1.0, rng);
    let v0 = random_matrix(n, 1.0, rng);
    let a_path = move |t: f64| {
        DMatrix::identity(n, n) * g0 + &p + &q * (t / (1.0 + t)) + &s * t.sin()
    };
    let g_path = move |t: f64| &c0 + &c1 * (3.0 * t).cos();
    let (t_end, h) = (2.0, 0.01);
    let gamma = |t: f64| min_sym_eigenvalue(&a_path(t));
    gronwall_check(&a_path, g_path, &v0, gamma, t_end, h)
}

fn lemma_battery(seed: u64) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    let samples: Vec<(f64, f64)> = (0..=1000).map(|i| i as f64 * 0.01).map(|t| (t, 0.5 * (-t).exp())).collect();
    rows.push(CheckRow::from_result(
        "riccati closed form v=0.5e^-t, mu=e^(t/2)",
        riccati_envelope_check(&samples, |t| (t / 2.0).exp()).map(|ok| (ok, "t in [0, 10]".into())),
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..20 {
        let n = 1 + (i % 8);
        rows.push(CheckRow::from_result(
            format!("gronwall random path {i:02} (n={n})"),
            random_gronwall_case(n, &mut rng).map(|r| {
                (r.max_violation <= GRONWALL_TOL, format!("max violation {:.3e}", r.max_violation))
            }),
        ));
    }
    let v0 = random_matrix(3, 1.0, &mut rng);
    let gamma = 0.8;
    rows.push(CheckRow::from_result(
        "gronwall saturation A=0.8 I, G=0",
        gronwall_check(|_| DMatrix::identity(3, 3) * gamma, |_| DMatrix::zeros(3, 3), &v0, |_| gamma, 5.0, 0.01)
            .map(|r| (r.max_gap <= GRONWALL_SATURATION_TOL, format!("max gap {:.3e}", r.max_gap))),
    ));
    rows
}

/// Measured quantities of one certified coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedRun {
    pub termination: Termination,
    /// `max ||x(t) - xhat|| / eps(t)` over the records; compare with `R`.
    pub max_err_over_eps: f64,
    /// `max ||B(t)|| - 1/eps(t) - ||B(0)||`; the tolerance is `1e-6 / eps(T)`.
    pub max_b_excess: f64,
    /// `max ||Lambda(t)||`; compare with `k`.
    pub max_lambda: f64,
    pub eps_end: f64,
    /// `||x(t) - xhat|| < eps(t) / lambda` at every record.
    pub riccati_ok: bool,
}

/// Integrates the coupled flow of `ci` (RK4, `h = 0.01`, horizon `t_end`,
/// ball monitor at the certified `R`) and measures the theorem's bounds.
pub fn certified_run(ci: &CompliantInstance, t_end: f64) -> Result<CertifiedRun> {
    let p = &ci.entry.problem;
    let cfg = IntegratorConfig {
        method: Method::Rk4,
        step_h: 0.01,
        horizon_t: t_end,
        record_every: 10,
        monitors: Monitors { ball: true, divergence: true },
    };
    let st0 = SolverState::coupled(ci.entry.default_x0.clone(), ci.b0.clone())?;
    let traj = integrate(p, &ci.schedule, &st0, &cfg, Some(&ci.entry.xhat), Some(ci.r))?;
    let b0_norm = op_norm(&ci.b0)?;
    let lambda = ci.certificate.lambda;
    let mut run = CertifiedRun {
        termination: traj.termination,
        max_err_over_eps: 0.0,
        max_b_excess: f64::NEG_INFINITY,
        max_lambda: 0.0,
        eps_end: ci.schedule.eps(traj.last().state.t)?,
        riccati_ok: true,
    };
    let mut samples = Vec::with_capacity(traj.records.len());
    for r in &traj.records {
        let d = &r.diagnostics;
        let err = d.err_norm.expect("known solution supplied");
        run.max_err_over_eps = run.max_err_over_eps.max(err / d.eps);
        run.max_b_excess = run.max_b_excess.max(d.b_norm.expect("coupled") - 1.0 / d.eps - b0_norm);
        run.max_lambda = run.max_lambda.max(d.lambda_norm.expect("coupled with known solution"));
        samples.push((r.state.t, err));
    }
    let eps_of = |t: f64| ci.schedule.eps(t).unwrap_or(f64::NAN);
    run.riccati_ok = riccati_envelope_check(&samples, |t| lambda / eps_of(t))?;
    Ok(run)
}

/// Horizon of the certificate battery.
pub const CERTIFIED_HORIZON: f64 = 20.0;

/// Certified instances used by the certificate battery: affine `n = 2, 4, 8`
/// and one mildly nonlinear `n = 4`.
pub fn certified_instances(seed: u64) -> Vec<(String, Result<CompliantInstance>)> {
    vec![
        ("compliant-affine-2".into(), compliant_instance(2, seed)),
        ("compliant-affine-4".into(), compliant_instance(4, seed)),
        ("compliant-affine-8".into(), compliant_instance(8, seed)),
        ("compliant-nonlinear-4".into(), compliant_nonlinear_instance(4, seed)),
    ]
}

fn certificate_battery(seed: u64) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    for (label, ci) in certified_instances(seed) {
        let ci = match ci {
            Ok(ci) => ci,
            Err(e) => {
                rows.push(CheckRow::new(format!("{label} certificate"), false, e.to_string()));
                continue;
            }
        };
        rows.push(CheckRow::new(
            format!("{label} certificate"),
            ci.certificate.overall,
            format!("R={:.4}, k={:.4}, lambda={:.4}", ci.r, ci.certificate.k, ci.certificate.lambda),
        ));
        match certified_run(&ci, CERTIFIED_HORIZON) {
            Ok(run) => {
                rows.push(CheckRow::new(
                    format!("{label} stays in ball"),
                    run.termination == Termination::HorizonReached && run.max_err_over_eps < ci.r,
                    format!("{}, max err/eps {:.4e} < R {:.4e}", run.termination.tag(), run.max_err_over_eps, ci.r),
                ));
                rows.push(CheckRow::new(
                    format!("{label} B-norm bound"),
                    run.max_b_excess <= 1e-6 / run.eps_end,
                    format!("max excess {:.3e}", run.max_b_excess),
                ));
                rows.push(CheckRow::new(
                    format!("{label} Lambda bound"),
                    run.max_lambda <= ci.certificate.k + 1e-6,
                    format!("max {:.4e} <= k {:.4e}", run.max_lambda, ci.certificate.k),
                ));
                rows.push(CheckRow::new(format!("{label} Riccati envelope"), run.riccati_ok, "mu = lambda / eps(t)"));
            }
            Err(e) => rows.push(CheckRow::new(format!("{label} run"), false, e.to_string())),
        }
    }
    rows
}

/// Step sizes of the order study.
pub const ORDER_STEPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
/// Horizon of the order study.
pub const ORDER_HORIZON: f64 = 2.0;

/// `(step, endpoint error)` pairs and the consecutive error ratios.
pub type OrderStudy = (Vec<(f64, f64)>, Vec<f64>);

/// Endpoint errors of `method` on the coupled flow of a smooth affine
/// instance at each of [`ORDER_STEPS`], and the consecutive error ratios.
pub fn order_study(method: Method, seed: u64) -> Result<OrderStudy> {
    let ci = compliant_instance(4, seed)?;
    let st0 = SolverState::coupled(ci.entry.default_x0.clone(), ci.b0.clone())?;
    let cfg = IntegratorConfig { method, horizon_t: ORDER_HORIZON, ..Default::default() };
    let errors = convergence_order(&ci.entry.problem, &ci.schedule, &st0, &cfg, &ORDER_STEPS)?;
    let ratios = errors.windows(2).map(|w| w[0].1 / w[1].1).collect();
    Ok((errors, ratios))
}

/// Acceptance window for the step-halving ratio of `method`.
pub fn order_window(method: Method) -> (f64, f64) {
    match method {
        Method::Rk4 => (14.0, 18.0),
        Method::Euler => (1.8, 2.2),
    }
}

fn order_battery(seed: u64) -> Vec<CheckRow> {
    [Method::Rk4, Method::Euler]
        .into_iter()
        .map(|m| {
            let (lo, hi) = order_window(m);
            CheckRow::from_result(
                format!("{m:?} step-halving ratios").to_lowercase(),
                order_study(m, seed).map(|(_, ratios)| {
                    let ok = ratios.iter().all(|r| (lo..=hi).contains(r));
                    let list: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
                    (ok, format!("[{}] in [{lo}, {hi}]", list.join(", ")))
                }),
            )
        })
        .collect()
}

