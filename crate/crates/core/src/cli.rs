//! Run configuration, single runs, method comparison and the command-line
//! front end of the `regflow` binary.
//!
//! A configuration is a TOML file whose keys mirror [`RunConfig`]; every key
//! can be overridden with `--set key=value` (dotted paths, flags win).
//! `schedule.eps0` is accepted as an alias that sets `c0 = eps0 c1^a`.
//!
//! Exit codes: 0 horizon reached, 1 configuration or I/O error, 2 ball exit,
//! 3 divergence or numerical failure, 4 failed verification.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{initial_inverse, B0Mode, SolverState};
use crate::gallery::{lookup, lookup_compliant, settle_bounds, CompliantSearch};
use crate::harness::{self, Suite, SweepSpec};
use crate::hilbert::HVector;
use crate::integrator::{integrate, IntegratorConfig, Method, Monitors, Termination, Trajectory};
use crate::schedule::{Regularization, Schedule};
use crate::theory::{certify, Certificate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BALL: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Header of the trajectory CSV.
pub const TRAJECTORY_HEADER: &str = "t,eps,residual_norm,err_norm,B_norm,lambda_norm,inverse_residual,D_norm";
/// Header of the comparison CSV.
pub const COMPARE_HEADER: &str = "t,err_direct,err_coupled,resid_direct,resid_coupled";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethod {
    /// Invert `F'* F' + eps I` at every evaluation.
    Direct,
    /// Evolve `B(t)` alongside `x(t)`.
    #[default]
    Coupled,
}

/// Base point from which `x0` is formed (before `x0_shift`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// The gallery entry's default start.
    #[default]
    Default,
    /// The known solution.
    Xhat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Method,
    pub h: f64,
    pub horizon: f64,
    pub record_every: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self { method: d.method, h: d.step_h, horizon: d.horizon_t, record_every: d.record_every }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub ball: bool,
    pub divergence: bool,
    /// Radius `R` of the ball monitor; defaults to the certified radius of
    /// `compliant-*` problems.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
}

impl Default for MonitorSection {
    fn default() -> Self {
        let d = Monitors::default();
        Self { ball: d.ball, divergence: d.divergence, ball_radius: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Gallery label, e.g. `compliant-affine-8` or `hilbert-6`.
    pub problem: String,
    pub method: FlowMethod,
    /// Seed of randomized gallery entries and of the bound sampling.
    pub seed: u64,
    pub b0_mode: B0Mode,
    pub schedule: Schedule,
    pub integrator: IntegratorSection,
    pub monitors: MonitorSection,
    pub start: Start,
    /// Added to every component of the start point.
    pub x0_shift: f64,
    /// Standard deviation of the fixed Gaussian perturbation of the data term.
    pub noise: f64,
    pub noise_seed: u64,
    /// Compute and report the convergence certificate for the start point.
    pub certificate: bool,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "compliant-affine-8".into(),
            method: FlowMethod::default(),
            seed: 0,
            b0_mode: B0Mode::default(),
            schedule: Schedule::default(),
            integrator: IntegratorSection::default(),
            monitors: MonitorSection::default(),
            start: Start::default(),
            x0_shift: 0.0,
            noise: 0.0,
            noise_seed: 0,
            certificate: false,
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn integrator_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            method: self.integrator.method,
            step_h: self.integrator.h,
            horizon_t: self.integrator.horizon,
            record_every: self.integrator.record_every,
            monitors: Monitors { ball: self.monitors.ball, divergence: self.monitors.divergence },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.integrator_config().validate()?;
        if self.noise < 0.0 || !self.noise.is_finite() {
            return Err(Error::Config(format!("noise must be finite and nonnegative, got {}", self.noise)));
        }
        if !self.x0_shift.is_finite() {
            return Err(Error::Config(format!("x0_shift must be finite, got {}", self.x0_shift)));
        }
        if let Some(r) = self.monitors.ball_radius {
            if r <= 0.0 || !r.is_finite() {
                return Err(Error::Config(format!("monitors.ball_radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    /// Applies dotted-key overrides (values in TOML syntax; bare words are
    /// taken as strings) and returns the validated result.
    pub fn with_overrides(&self, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let table = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let toml::Value::Table(mut table) = table else {
            return Err(Error::Config("configuration is not a table".into()));
        };
        for (key, value) in overrides {
            set_dotted(&mut table, key, value.clone())?;
        }
        from_table(table)
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn from_table(mut table: toml::Table) -> Result<RunConfig> {
    let eps0 = match table.get_mut("schedule").and_then(|s| s.as_table_mut()) {
        Some(s) => s.remove("eps0"),
        None => None,
    };
    let mut cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e| Error::Config(e.to_string()))?;
    if let Some(v) = eps0 {
        let eps0 = v
            .as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| Error::Config(format!("schedule.eps0 must be a number, got {v}")))?;
        cfg.schedule.c0 = eps0 * cfg.schedule.c1.powf(cfg.schedule.a);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `key=value`; the value is read as a TOML value, or as a string if
/// that fails.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed table holds the key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key, value))
}

/// Reads the optional config file and applies `overrides` on top.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            text.parse::<toml::Table>().map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (key, value) = parse_override(o)?;
        set_dotted(&mut table, &key, value)?;
    }
    from_table(table)
}

/// Scalar view of a [`Certificate`] for the summary file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateSummary {
    pub overall: bool,
    pub n1: f64,
    pub n2: f64,
    pub b: f64,
    pub eps0: f64,
    pub b0_norm: f64,
    pub lambda0_norm: f64,
    pub k: f64,
    pub r: f64,
    pub lambda: f64,
    pub w_norm: f64,
    pub source_residual: f64,
    pub x0_distance: f64,
    pub bound_samples: usize,
    pub bound_inflation: f64,
    pub notes: Vec<String>,
    pub checks: BTreeMap<String, bool>,
}

impl From<&Certificate> for CertificateSummary {
    fn from(c: &Certificate) -> Self {
        Self {
            overall: c.overall,
            n1: c.n1,
            n2: c.n2,
            b: c.b,
            eps0: c.eps0,
            b0_norm: c.b0_norm,
            lambda0_norm: c.lambda0_norm,
            k: c.k,
            r: c.r,
            lambda: c.lambda,
            w_norm: c.w_norm,
            source_residual: c.source_residual,
            x0_distance: c.x0_distance,
            bound_samples: c.bound_samples,
            bound_inflation: c.bound_inflation,
            notes: c.notes.clone(),
            checks: c.checks.named().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

/// Result of one run held in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub label: String,
    pub xhat: HVector,
    pub trajectory: Trajectory,
    pub certificate: Option<Certificate>,
    /// Why the certificate could not be formed, when requested.
    pub certificate_error: Option<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.trajectory.termination)
    }

    pub fn final_err(&self) -> f64 {
        self.trajectory.last().diagnostics.err_norm.expect("gallery problems know their solution")
    }

    pub fn final_residual(&self) -> f64 {
        self.trajectory.last().diagnostics.residual_norm
    }
}

pub fn exit_code(t: Termination) -> i32 {
    match t {
        Termination::HorizonReached => EXIT_OK,
        Termination::BallExit => EXIT_BALL,
        Termination::Divergence | Termination::NumericalError => EXIT_DIVERGENCE,
    }
}

/// Runs `cfg` in memory; output paths are ignored.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let instance = lookup_compliant(&cfg.problem, cfg.seed)?;
    let entry = match &instance {
        Some(ci) => ci.entry.clone(),
        None => lookup(&cfg.problem, cfg.seed)?,
    };
    let n = entry.problem.dim();
    let base = match cfg.start {
        Start::Default => &entry.default_x0,
        Start::Xhat => &entry.xhat,
    };
    let x0 = HVector::from_dvector(&**base + DVector::from_element(n, cfg.x0_shift))?;
    let problem = if cfg.noise > 0.0 { entry.noisy_problem(cfg.noise, cfg.noise_seed)? } else { entry.problem.clone() };
    let schedule = cfg.schedule;
    let eps0 = schedule.eps(0.0)?;

    let b0 = match (cfg.method, cfg.certificate) {
        (FlowMethod::Direct, false) => None,
        _ => Some(initial_inverse(&problem, &x0, eps0, cfg.b0_mode)?),
    };
    let (certificate, certificate_error) = if cfg.certificate {
        let b0 = b0.as_ref().expect("formed above when a certificate is requested");
        let search = CompliantSearch::default();
        // the noise-free problem: xhat does not solve the perturbed one
        let p = &entry.problem;
        match settle_bounds(p, &entry.xhat, &x0, &schedule, b0, search.samples, search.n2_floor, cfg.seed) {
            Ok((bounds, r)) => (Some(certify(p, &entry.xhat, &x0, &schedule, b0, &bounds, r)?), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    let radius = match (cfg.monitors.ball_radius, &instance) {
        (Some(r), _) => Some(r),
        (None, Some(ci)) => Some(ci.r),
        (None, None) => None,
    };
    let st0 = match cfg.method {
        FlowMethod::Direct => SolverState::direct(x0),
        FlowMethod::Coupled => SolverState::coupled(x0, b0.expect("formed above for the coupled flow"))?,
    };
    let trajectory = integrate(&problem, &schedule, &st0, &cfg.integrator_config(), Some(&entry.xhat), radius)?;
    Ok(RunOutcome {
        config: cfg.clone(),
        label: problem.label.clone(),
        xhat: entry.xhat,
        trajectory,
        certificate,
        certificate_error,
    })
}

fn push_num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        push_num(out, v);
    }
}

/// Trajectory CSV; columns needing `B` are blank for the direct flow.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(160 * (traj.records.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in &traj.records {
        let d = &r.diagnostics;
        push_num(&mut out, r.state.t);
        out.push(',');
        push_num(&mut out, d.eps);
        out.push(',');
        push_num(&mut out, d.residual_norm);
        for v in [d.err_norm, d.b_norm, d.lambda_norm, d.inverse_residual, d.d_norm] {
            out.push(',');
            push_opt(&mut out, v);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalRecord {
    pub t: f64,
    pub eps: f64,
    pub residual_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub err_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_norm: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary<'a> {
    problem: &'a str,
    termination: &'static str,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<&'a str>,
    records: usize,
    #[serde(rename = "final")]
    last: FinalRecord,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate_error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<CertificateSummary>,
}

fn final_record(traj: &Trajectory) -> FinalRecord {
    let r = traj.last();
    let d = &r.diagnostics;
    FinalRecord {
        t: r.state.t,
        eps: d.eps,
        residual_norm: d.residual_norm,
        err_norm: d.err_norm,
        b_norm: d.b_norm,
        lambda_norm: d.lambda_norm,
        inverse_residual: d.inverse_residual,
        d_norm: d.d_norm,
    }
}

/// Summary file contents (TOML) for a run, including the full config echo.
pub fn summary_toml(outcome: &RunOutcome) -> Result<String> {
    let summary = RunSummary {
        problem: &outcome.label,
        termination: outcome.trajectory.termination.tag(),
        exit_code: outcome.exit_code(),
        message: outcome.trajectory.message.as_deref(),
        records: outcome.trajectory.records.len(),
        last: final_record(&outcome.trajectory),
        config: &outcome.config,
        certificate_error: outcome.certificate_error.as_deref(),
        certificate: outcome.certificate.as_ref().map(CertificateSummary::from),
    };
    toml::to_string(&summary).map_err(|e| Error::Config(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs `cfg` and writes the configured outputs. Output paths are created
/// before integrating so that an unwritable path fails fast.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    for path in [&cfg.output.trajectory, &cfg.output.summary].into_iter().flatten() {
        std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    let outcome = simulate(cfg)?;
    if let Some(path) = &cfg.output.trajectory {
        write_file(path, &trajectory_csv(&outcome.trajectory))?;
    }
    if let Some(path) = &cfg.output.summary {
        write_file(path, &summary_toml(&outcome)?)?;
    }
    Ok(outcome)
}

/// A direct and a coupled run of the same problem and schedule.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub direct: RunOutcome,
    pub coupled: RunOutcome,
    /// `(t, err_direct, err_coupled, resid_direct, resid_coupled)` on the
    /// common record times.
    pub rows: Vec<[f64; 5]>,
}

impl Comparison {
    /// `final err_coupled / final err_direct` on the last common row.
    pub fn final_error_ratio(&self) -> Option<f64> {
        self.rows.last().map(|r| r[2] / r[1])
    }

    pub fn exit_code(&self) -> i32 {
        match self.direct.exit_code() {
            EXIT_OK => self.coupled.exit_code(),
            c => c,
        }
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(COMPARE_HEADER);
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_num(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_toml(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Side<'a> {
            termination: &'static str,
            #[serde(rename = "final")]
            last: FinalRecord,
            config: &'a RunConfig,
        }
        #[derive(Serialize)]
        struct CompareSummary<'a> {
            problem: &'a str,
            rows: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            final_error_ratio_coupled_over_direct: Option<f64>,
            direct: Side<'a>,
            coupled: Side<'a>,
        }
        fn side(o: &RunOutcome) -> Side<'_> {
            Side { termination: o.trajectory.termination.tag(), last: final_record(&o.trajectory), config: &o.config }
        }
        let s = CompareSummary {
            problem: &self.direct.label,
            rows: self.rows.len(),
            final_error_ratio_coupled_over_direct: self.final_error_ratio(),
            direct: side(&self.direct),
            coupled: side(&self.coupled),
        };
        toml::to_string(&s).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Runs a direct/coupled pair. Everything except `method`, `b0_mode` and the
/// output paths must agree between the two configurations.
pub fn compare(a: &RunConfig, b: &RunConfig) -> Result<Comparison> {
    let (direct, coupled) = match (a.method, b.method) {
        (FlowMethod::Direct, FlowMethod::Coupled) => (a, b),
        (FlowMethod::Coupled, FlowMethod::Direct) => (b, a),
        _ => return Err(Error::Config("compare needs one direct and one coupled configuration".into())),
    };
    let strip = |c: &RunConfig| RunConfig {
        method: FlowMethod::Coupled,
        b0_mode: B0Mode::default(),
        certificate: false,
        output: OutputSection::default(),
        ..c.clone()
    };
    if direct.problem != coupled.problem {
        return Err(Error::Config(format!(
            "compare needs the same problem (got `{}` and `{}`)",
            direct.problem, coupled.problem
        )));
    }
    if strip(direct) != strip(coupled) {
        return Err(Error::Config("compare configurations differ beyond method and b0_mode".into()));
    }
    let direct = simulate(direct)?;
    let coupled = simulate(coupled)?;
    let rows = direct
        .trajectory
        .records
        .iter()
        .zip(&coupled.trajectory.records)
        .take_while(|(d, c)| d.state.t == c.state.t)
        .map(|(d, c)| {
            let (dd, cd) = (&d.diagnostics, &c.diagnostics);
            [
                d.state.t,
                dd.err_norm.unwrap_or(f64::NAN),
                cd.err_norm.unwrap_or(f64::NAN),
                dd.residual_norm,
                cd.residual_norm,
            ]
        })
        .collect();
    Ok(Comparison { direct, coupled, rows })
}

#[derive(Debug, Parser)]
#[command(name = "regflow", version, about = "Continuous regularized Gauss-Newton flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set schedule.eps0=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one flow and write the trajectory and summary.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Trajectory CSV path (overrides `output.trajectory`).
        #[arg(short, long)]
        trajectory: Option<PathBuf>,
        /// Summary TOML path (overrides `output.summary`).
        #[arg(short, long)]
        summary: Option<PathBuf>,
    },
    /// Run a direct and a coupled configuration side by side.
    Compare {
        /// The two configuration files (one direct, one coupled).
        #[arg(num_args = 2, required = true)]
        configs: Vec<PathBuf>,
        /// Overrides applied to both configurations.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Side-by-side CSV path.
        #[arg(short, long)]
        output: PathBuf,
        /// Summary TOML path.
        #[arg(short, long)]
        summary: Option<PathBuf>,
    },
    /// Run a verification battery and print a pass/fail table.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Seed of the randomized instances.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep one configuration key over a list of values.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Key to sweep, e.g. `schedule.eps0`.
        #[arg(long, required_unless_present = "preset")]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required_unless_present = "preset")]
        values: Vec<f64>,
        /// Named sweep; `eps0-range` sweeps `schedule.eps0` over 0.001, 0.01, 0.1.
        #[arg(long, conflicts_with_all = ["param", "values"])]
        preset: Option<String>,
        /// Comma-separated noise seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Noise level delta.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Results CSV path.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_CONFIG
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { cfg, trajectory, summary } => {
            let mut config = load_config(cfg.config.as_deref(), &cfg.overrides)?;
            if trajectory.is_some() {
                config.output.trajectory = trajectory;
            }
            if summary.is_some() {
                config.output.summary = summary;
            }
            let outcome = run(&config)?;
            let last = outcome.trajectory.last();
            println!(
                "{}: {} at t = {} (residual {:e}, error {:e})",
                outcome.label,
                outcome.trajectory.termination.tag(),
                last.state.t,
                last.diagnostics.residual_norm,
                outcome.final_err()
            );
            if let Some(m) = &outcome.trajectory.message {
                println!("  {m}");
            }
            Ok(outcome.exit_code())
        }
        Command::Compare { configs, overrides, output, summary } => {
            let a = load_config(Some(&configs[0]), &overrides)?;
            let b = load_config(Some(&configs[1]), &overrides)?;
            let cmp = compare(&a, &b)?;
            write_file(&output, &cmp.csv())?;
            if let Some(path) = summary {
                write_file(&path, &cmp.summary_toml()?)?;
            }
            match cmp.final_error_ratio() {
                Some(r) => println!("{}: final error ratio coupled/direct = {r:e}", cmp.direct.label),
                None => println!("{}: no common records", cmp.direct.label),
            }
            Ok(cmp.exit_code())
        }
        Command::Verify { suite, seed } => {
            let rows = harness::verify(suite, seed);
            print!("{}", harness::format_table(&rows));
            Ok(if rows.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Sweep { cfg, param, values, preset, seeds, noise, output } => {
            let base = load_config(cfg.config.as_deref(), &cfg.overrides)?;
            let (param, values) = match preset.as_deref() {
                Some("eps0-range") => ("schedule.eps0".to_string(), harness::EPS0_RANGE.to_vec()),
                Some(other) => return Err(Error::Config(format!("unknown sweep preset `{other}`"))),
                None => (param.expect("required without a preset"), values),
            };
            let spec = SweepSpec::new(base, param, values, seeds, noise)?;
            let rows = harness::sweep(&spec);
            write_file(&output, &harness::sweep_csv(&rows))?;
            for r in &rows {
                println!("{} = {:e}, seed {}: {}", spec.param, r.param_value, r.seed, r.termination);
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand;
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    dispatch(cli).unwrap_or_else(|e| report(&e))
}
