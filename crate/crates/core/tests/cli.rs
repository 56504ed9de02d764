use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn wazewski(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wazewski")).args(args).output().unwrap()
}

fn run_config(command: &str, toml: &str, out: &Path) -> Output {
    let cfg = out.join("scenario.toml");
    fs::create_dir_all(out).unwrap();
    fs::write(&cfg, toml).unwrap();
    wazewski(&[command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--json"])
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_keys_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("classify", "[system]\nkind = \"simple\"\nmass = 2\n", dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["status"], "error");
    assert_eq!(err["exit_code"], 3);
    assert!(err["message"].as_str().unwrap().contains("mass"));
}

#[test]
fn malformed_expression_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[system]\nkind = \"simple\"\n[controller]\nu = \"sin(q\"\n[classify]\nstate = [1.0, 0.0]\nhorizon = 1.0\n";
    let out = run_config("classify", toml, dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["offset"], 5);
}

#[test]
fn illegal_variable_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[system]\nkind = \"simple\"\n[controller]\nu = \"theta\"\n[classify]\nstate = [1.0, 0.0]\nhorizon = 1.0\n";
    assert_eq!(run_config("classify", toml, dir.path()).status.code(), Some(3));
}

#[test]
fn unstable_gain_exits_with_verification_failure() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[system]\nkind = \"simple\"\n[controller]\nbuiltin = \"pd\"\nparams = [0.5, 1.0, 1.5707963267948966]\n[lyapunov]\ncenter = [1.5707963267948966, 0.0]\n";
    assert_eq!(run_config("lyapunov", toml, dir.path()).status.code(), Some(4));
}

#[test]
fn classify_origin_exits_left_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let out = wazewski(&[
        "classify",
        "--config",
        scenario("classify_origin.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let fate = read_json(dir.path().join("fate.json"));
    assert_eq!(fate["tag"], "ExitLeft");
    assert_eq!(fate["t_event"].as_f64(), Some(0.0));
}

#[test]
fn survivor_recovers_separatrix_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = wazewski(&[
        "survivor",
        "--config",
        scenario("separatrix.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let status: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(status["status"], "ok");
    let result = read_json(dir.path().join("survivor.json"));
    let p0 = result["state_star"][1].as_f64().unwrap();
    assert!((p0 - (2.0 - 2f64.sqrt()).sqrt()).abs() < 1e-6, "{p0}");
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,q,p\n"));
    let history = read_json(dir.path().join("bracket_history.plot.json"));
    assert_eq!(history["kind"], "bracket-history");
}

#[test]
fn resolved_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = wazewski(&[
        "simulate",
        "--config",
        scenario("simulate_swing.toml").to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
        "--horizon",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let resolved = fs::read_to_string(first.join("resolved-config.toml")).unwrap();
    assert!(resolved.contains("t_end = 1.5"));
    let second = dir.path().join("second");
    let out = run_config("simulate", &resolved, &second);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read(first.join("trajectory.csv")).unwrap(),
        fs::read(second.join("trajectory.csv")).unwrap()
    );
    let rows = fs::read_to_string(first.join("trajectory.csv")).unwrap().lines().count();
    assert_eq!(rows, 152);
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(wazewski(&["--help"]).status.code(), Some(0));
    assert_eq!(wazewski(&["levitate"]).status.code(), Some(3));
    assert_eq!(wazewski(&["classify"]).status.code(), Some(3));
}

#[test]
fn non_lipschitz_law_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[system]\nkind = \"simple\"\n[controller]\nu = \"-2*sign(q - pi/2)\"\n[classify]\nstate = [1.0, 0.0]\nhorizon = 2.0\n";
    let out = run_config("classify", toml, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let status: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(status["warnings"][0].as_str().unwrap().contains("Lipschitz"));
}
