use std::path::{Path, PathBuf};

use regflow::cli::{
    compare, load_config, main_with_args, simulate, summary_toml, trajectory_csv, FlowMethod, RunConfig, Start, EXIT_BALL,
    EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, TRAJECTORY_HEADER,
};
use regflow::harness::{sweep, sweep_csv, SweepSpec, EPS0_RANGE};
use regflow::gallery::compliant_instance;
use regflow::B0Mode;
use tempfile::TempDir;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run_cli(args: &[&str]) -> i32 {
    let mut all = vec!["regflow"];
    all.extend_from_slice(args);
    main_with_args(all)
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

#[test]
fn identity_started_at_root_stays_there() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "id.toml", "problem = \"identity-6\"\nstart = \"xhat\"\n");
    let traj = dir.path().join("traj.csv");
    let code = run_cli(&["run", "-c", cfg.to_str().unwrap(), "-t", traj.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let csv = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(csv.lines().next().unwrap(), TRAJECTORY_HEADER);
    let err = column(&csv, "err_norm");
    assert!(!err.is_empty());
    assert!(err.iter().all(|e| *e <= 1e-12));
}

#[test]
fn default_configuration_runs_cleanly() {
    let dir = TempDir::new().unwrap();
    let summary = dir.path().join("summary.toml");
    assert_eq!(run_cli(&["run", "-s", summary.to_str().unwrap()]), EXIT_OK);
    let text = std::fs::read_to_string(&summary).unwrap();
    let doc: toml::Table = text.parse().unwrap();
    assert_eq!(doc["termination"].as_str(), Some("horizon_reached"));
    // the full configuration is echoed back and reloads to the same value
    let echoed: RunConfig = doc["config"].clone().try_into().unwrap();
    assert_eq!(echoed.problem, "compliant-affine-8");
    assert_eq!(echoed.schedule, RunConfig::default().schedule);
}

#[test]
fn divergent_configuration_reports_failure_and_keeps_last_record() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "div.toml",
        "problem = \"autoconvolution-8\"\nx0_shift = 1e7\n[schedule]\neps0 = 10.0\n",
    );
    let traj = dir.path().join("traj.csv");
    let summary = dir.path().join("summary.toml");
    let code = run_cli(&["run", "-c", cfg.to_str().unwrap(), "-t", traj.to_str().unwrap(), "-s", summary.to_str().unwrap()]);
    assert!(code == EXIT_BALL || code == EXIT_DIVERGENCE, "exit {code}");
    let csv = std::fs::read_to_string(&traj).unwrap();
    assert!(csv.lines().count() >= 2);
    let doc: toml::Table = std::fs::read_to_string(&summary).unwrap().parse().unwrap();
    assert!(doc.contains_key("final"));
    assert_ne!(doc["termination"].as_str(), Some("horizon_reached"));
}

#[test]
fn tiny_ball_triggers_the_exit_monitor() {
    let cfg = load_config(None, &["monitors.ball=true".into(), "monitors.ball_radius=1e-6".into()]).unwrap();
    let out = simulate(&cfg).unwrap();
    assert_eq!(out.exit_code(), EXIT_BALL);
    assert_eq!(out.trajectory.termination.tag(), "ball_exit");
}

fn sup_gap(c1: f64) -> f64 {
    let base = load_config(None, &[format!("schedule.c1={c1}"), "schedule.eps0=0.1".into()]).unwrap();
    let base = RunConfig { b0_mode: B0Mode::ExactInverse, ..base };
    let direct = RunConfig { method: FlowMethod::Direct, ..base.clone() };
    let cmp = compare(&direct, &base).unwrap();
    assert_eq!(cmp.exit_code(), EXIT_OK);
    assert!(!cmp.rows.is_empty());
    cmp.rows.iter().map(|r| (r[1] - r[2]).abs()).fold(0.0, f64::max)
}

// B(t) lags the exact regularized inverse by O(|eps'|); with eps(0) = 0.1 and
// c1 = 1e3 the drift is at most 1e-4
#[test]
fn compare_with_exact_initial_inverse_tracks_direct_flow() {
    let slow = sup_gap(1e3);
    assert!(slow <= 1e-6, "sup |err_direct - err_coupled| = {slow:e}");
    let slower = sup_gap(1e6);
    let ratio = slow / slower;
    assert!((500.0..=2000.0).contains(&ratio), "gap ratio {ratio}");
}

#[test]
fn compare_late_horizon_reports_a_finite_ratio() {
    let base = load_config(None, &["integrator.horizon=200".into(), "integrator.record_every=1000".into()]).unwrap();
    let direct = RunConfig { method: FlowMethod::Direct, ..base.clone() };
    let cmp = compare(&direct, &base).unwrap();
    assert!(cmp.rows.iter().all(|r| r.iter().all(|v| v.is_finite())));
    assert!(cmp.final_error_ratio().unwrap().is_finite());
    let doc: toml::Table = cmp.summary_toml().unwrap().parse().unwrap();
    assert!(doc.contains_key("final_error_ratio_coupled_over_direct"));
}

// hilbert-4 has eigenvalues of J*J near eps, where B relaxes too slowly to
// stay at the regularized inverse; the two flows separate
#[test]
fn compare_on_ill_conditioned_problem_still_reports() {
    let base = RunConfig { problem: "hilbert-4".into(), ..RunConfig::default() };
    let direct = RunConfig { method: FlowMethod::Direct, ..base.clone() };
    let cmp = compare(&direct, &base).unwrap();
    assert!(cmp.final_error_ratio().unwrap().is_finite());
}

#[test]
fn compare_cli_rejects_mismatched_problems() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.toml", "problem = \"hilbert-4\"\nmethod = \"direct\"\n");
    let b = write(dir.path(), "b.toml", "problem = \"hilbert-5\"\n");
    let out = dir.path().join("cmp.csv");
    let code = run_cli(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);

    let b = write(dir.path(), "b.toml", "problem = \"hilbert-4\"\n");
    let code = run_cli(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn configuration_errors_exit_with_code_one() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.toml", "problem = \"hilbert-4\"\nunknown_key = 1\n");
    assert_eq!(run_cli(&["run", "-c", bad.to_str().unwrap()]), EXIT_CONFIG);
    assert_eq!(run_cli(&["run", "--set", "problem=nothing-4"]), EXIT_CONFIG);
    assert_eq!(run_cli(&["run", "--set", "integrator.h=-1"]), EXIT_CONFIG);
    let blocked = dir.path().join("missing").join("t.csv");
    assert_eq!(run_cli(&["run", "-t", blocked.to_str().unwrap()]), EXIT_CONFIG);
}

#[test]
fn verify_suites_pass() {
    for suite in ["lemmas", "certificate", "order"] {
        assert_eq!(run_cli(&["verify", suite]), EXIT_OK, "{suite}");
    }
}

#[test]
fn repeated_runs_produce_identical_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "r.toml", "problem = \"feigenbaum-6\"\nseed = 3\n[integrator]\nhorizon = 5.0\n");
    let mut outputs = Vec::new();
    for i in 0..3 {
        let t = dir.path().join(format!("t{i}.csv"));
        assert_eq!(run_cli(&["run", "-c", cfg.to_str().unwrap(), "-t", t.to_str().unwrap()]), EXIT_OK);
        outputs.push(std::fs::read(&t).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn eps0_preset_sweep_reaches_horizon() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep.csv");
    assert_eq!(run_cli(&["sweep", "--preset", "eps0-range", "-o", out.to_str().unwrap()]), EXIT_OK);
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), EPS0_RANGE.len());
    assert!(rows.iter().all(|r| r.contains("horizon_reached")), "{csv}");
}

#[test]
fn sweep_outside_range_is_recorded() {
    let spec = SweepSpec::new(RunConfig::default(), "schedule.eps0", vec![1.0], vec![0], 0.0).unwrap();
    let rows = sweep(&spec);
    assert_eq!(rows.len(), 1);
    assert!(!rows[0].termination.is_empty());
    assert_eq!(sweep_csv(&rows).lines().count(), 2);
    assert!(SweepSpec::new(RunConfig::default(), "schedule.eps0", vec![], vec![0], 0.0).is_err());
}

#[test]
fn noise_does_not_improve_the_reconstruction() {
    let clean = simulate(&RunConfig::default()).unwrap().final_err();
    let noisy: Vec<f64> = (0..10)
        .map(|s| simulate(&RunConfig { noise: 1e-3, noise_seed: s, ..RunConfig::default() }).unwrap().final_err())
        .collect();
    let m = median(noisy);
    assert!(m >= clean - 1e-12, "median noisy {m:e} vs clean {clean:e}");
}

#[test]
fn certificate_is_reported_for_compliant_runs() {
    let ci = compliant_instance(8, 0).unwrap();
    let cfg = RunConfig { certificate: true, schedule: ci.schedule, ..RunConfig::default() };
    let out = simulate(&cfg).unwrap();
    let cert = out.certificate.as_ref().unwrap_or_else(|| panic!("{:?}", out.certificate_error));
    assert!(cert.overall);
    assert_eq!(out.exit_code(), EXIT_OK);
    let doc: toml::Table = summary_toml(&out).unwrap().parse().unwrap();
    assert_eq!(doc["certificate"]["overall"].as_bool(), Some(true));

    // the default schedule has b = 1 / c0 = 10, so k >= 1 and nothing certifies
    let fails = simulate(&RunConfig { certificate: true, ..RunConfig::default() }).unwrap();
    assert!(fails.certificate.as_ref().is_none_or(|c| !c.overall));

    let plain = simulate(&RunConfig { start: Start::Xhat, ..RunConfig::default() }).unwrap();
    assert!(plain.certificate.is_none());
    assert!(trajectory_csv(&plain.trajectory).starts_with(TRAJECTORY_HEADER));
}
