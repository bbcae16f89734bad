use std::process::{Command, Output};

fn fxmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fxmpc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_file_exits_with_config_code() {
    let o = fxmpc(&["run", "--config", "/definitely/not/here.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not/here.toml"));
}

#[test]
fn malformed_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[experiment]\nscenario = \"hover\"\n\n[mpc]\nhorizon = \"ten\"\n").unwrap();
    let o = fxmpc(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_invalid_value_are_config_errors() {
    assert_eq!(fxmpc(&["run", "--set", "mpc.horizn=5"]).status.code(), Some(2));
    assert_eq!(fxmpc(&["run", "--set", "mpc.horizon=0"]).status.code(), Some(2));
}

#[test]
fn repeated_solver_failure_exits_with_abort_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abort");
    let o = fxmpc(&["run", "--set", "weights.q_p=[1e300, 1e300, 1e300]", "--duration", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("solver aborted"));
    // The partial log is still written.
    assert!(out.join("run.csv").exists());
}

#[test]
fn check_gains_reports_margin() {
    let o = fxmpc(&["check-gains"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("L2 condition: PASS margin 1.7906"), "{}", stdout(&o));
    let weak = fxmpc(&["check-gains", "--set", "fxtdo.k2=0.1"]);
    assert_eq!(weak.status.code(), Some(1));
    assert!(stdout(&weak).contains("FAIL"));
}

#[test]
fn run_writes_log_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hover");
    let o = fxmpc(&[
        "run",
        "--scenario",
        "hover",
        "--controller",
        "hgdo-mpc",
        "--duration",
        "25",
        "--rmse-start",
        "1",
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25_001 + 2);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["controller"], "hgdo-mpc");
    assert_eq!(summary["scenario"], "hover");
    assert_eq!(summary["seed"], 4);
    assert_eq!(summary["rmse_start"], 1.0);
    assert!(summary["convergence_time"].as_f64().unwrap() < 5.0);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "[experiment]\nscenario = \"hover\"\nduration = 3.0\nrmse_start = 0.0\n").unwrap();
    let out = dir.path().join("o");
    let o = fxmpc(&["--config", path.to_str().unwrap(), "run", "--controller", "pid", "--duration", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["duration"], 2.0);
    assert_eq!(summary["controller"], "pid");
}

#[test]
fn defaults_round_trip_through_a_file() {
    let o = fxmpc(&["defaults"]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("defaults.toml");
    std::fs::write(&path, stdout(&o)).unwrap();
    let again = fxmpc(&["--config", path.to_str().unwrap(), "defaults"]);
    assert_eq!(stdout(&again), stdout(&o));
}

#[test]
fn small_monte_carlo_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc");
    let o = fxmpc(&["montecarlo", "--runs", "2", "--controller", "pid,mpc", "--duration", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("montecarlo.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("controller,run,scale,rmse,error"));
    assert_eq!(csv.lines().count(), 1 + 4);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("montecarlo.json")).unwrap()).unwrap();
    assert_eq!(summary["pid"]["count"], 2);
}
