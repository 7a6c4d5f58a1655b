use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vekua(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vekua")).args(args).output().unwrap()
}

fn run_with(dir: &Path, mode: &str, config: &str) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    vekua(&[mode, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()])
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn solve_writes_solution_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(
        dir.path(),
        "solve",
        r#"{"mesh": {"n_r": 12, "n_t": 24, "n_b": 256}, "A0": "0.3", "B0": "0.2i", "F": "manufactured:conj(z)*absz"}"#,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,r,re_v,im_v"));
    assert_eq!(csv.lines().count(), 1 + 12 * 24);
    let r = report(dir.path());
    assert_eq!(r["status"], "ok");
    assert!(r["relative_error"].as_f64().unwrap() < 2e-2);
}

#[test]
fn unsolvable_rh_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "rh", r#"{"mesh": {"n_r": 8, "n_t": 16, "n_b": 256}, "m": 0, "g": "1"}"#);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("unsolvable"));
    assert_eq!(report(dir.path())["rh"]["solvable"], false);
}

#[test]
fn rh_with_positive_index_writes_the_basis() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(
        dir.path(),
        "rh",
        r#"{"mesh": {"n_r": 8, "n_t": 16, "n_b": 256}, "m": 2, "g": "re(z^3)", "A0": "0.2", "B0": "0.1i"}"#,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..3 {
        assert!(dir.path().join(format!("basis_{i}.csv")).exists());
    }
    assert!(!dir.path().join("basis_3.csv").exists());
}

#[test]
fn convergence_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(
        dir.path(),
        "convergence",
        r#"{"mesh": {"n_b": 256}, "A0": "0.3", "B0": "0.2i", "F": "manufactured:conj(z)*absz", "levels": [[8, 16], [12, 24], [16, 32]]}"#,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n_r,n_t,error,ratio");
    assert_eq!(lines.len(), 4);
}

#[test]
fn verify_runs_without_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = vekua(&["verify", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
}

#[test]
fn mutated_verify_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "verify", r#"{"mutate_kernel_sign": true}"#);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "solve", r#"{"mesh": {"n_r": 8}, "bogus": 1}"#);
    assert_eq!(out.status.code(), Some(1));
    let out = run_with(dir.path(), "solve", r#"{"A0": "0.3 +"}"#);
    assert_eq!(out.status.code(), Some(1));
    let out = vekua(&["solve"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mode_in_file_must_agree_with_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "solve", r#"{"mode": "rh", "m": 1, "g": "re(z)"}"#);
    assert_eq!(out.status.code(), Some(1));
}
