//! End-to-end checks of the binary: exit codes, CSV outputs, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maxwork"))
}

fn repo_root() -> PathBuf {
    // crates/cli -> workspace root
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .unwrap()
        .to_path_buf()
}

fn scenario(name: &str) -> PathBuf {
    repo_root().join("scenarios").join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn analyze_prints_verdicts() {
    let out = run_ok(bin().arg("analyze").arg(scenario("ec2_scanopt.scn")));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("maximal per-server configurations: (0,1,1) (1,0,1) (2,0,0)"));
    assert!(text.contains("cutoff at 34"));
    assert!(text.contains("-> inside"));
    assert!(text.contains("-> outside"));
}

#[test]
fn missing_scenario_is_a_config_error() {
    let out = bin()
        .arg("analyze")
        .arg("no/such/file.scn")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("configuration error"), "stderr: {err}");
}

#[test]
fn invalid_scenario_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "just not toml at all [[[").unwrap();
    let out = bin().arg("analyze").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(bin().arg("simulate").arg(scenario("smoke.scn")).arg("--out").arg(&a));
    run_ok(bin().arg("simulate").arg(scenario("smoke.scn")).arg("--out").arg(&b));
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b, "same seed must produce identical bytes");
    let text = String::from_utf8(bytes_a).unwrap();
    assert!(text.starts_with("slot,avg_queue_work,max_queue_work,avg_latency"));
    assert_eq!(text.lines().count(), 11, "header plus 10 samples");
}

#[test]
fn simulate_seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(bin().arg("simulate").arg(scenario("smoke.scn")).arg("--out").arg(&a));
    run_ok(
        bin()
            .arg("simulate")
            .arg(scenario("smoke.scn"))
            .arg("--seed")
            .arg("8")
            .arg("--out")
            .arg(&b),
    );
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn simulate_multi_run_writes_one_file_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(
        bin()
            .arg("simulate")
            .arg(scenario("smoke.scn"))
            .arg("--runs")
            .arg("2")
            .arg("--out")
            .arg(dir.path().join("multi.csv")),
    );
    assert!(dir.path().join("multi-7.csv").exists());
    assert!(dir.path().join("multi-8.csv").exists());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("verdict:").count(), 2);
}

#[test]
fn out_dir_env_is_the_default_sink() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        bin()
            .arg("simulate")
            .arg(scenario("smoke.scn"))
            .env("MAXWORK_OUT_DIR", dir.path()),
    );
    assert!(dir.path().join("smoke.csv").exists());
}

#[test]
fn sweep_prints_margin_table() {
    let out = run_ok(
        bin()
            .arg("sweep")
            .arg(scenario("ec2_scanopt.scn"))
            .arg("--kappa-scale")
            .arg("0,1,2"),
    );
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kappa_scale,margin_none,margin_all,margin_opt"
    );
    assert_eq!(text.lines().count(), 4);
    // scale 0 collapses every strategy onto the genuine-only margin 1/99
    let first = text.lines().nth(1).unwrap();
    assert!(first.starts_with("0,0.010101"), "row: {first}");
}

#[test]
fn compare_emits_ratio_series() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("cmp.csv");
    run_ok(
        bin()
            .arg("compare")
            .arg(scenario("smoke.scn"))
            .arg(scenario("smoke.scn"))
            .arg("--out")
            .arg(&out_path),
    );
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("slot,avg_latency_a,avg_latency_b,latency_ratio"));
    // identical runs: every ratio is exactly 1
    for line in text.lines().skip(1) {
        let ratio = line.split(',').nth(3).unwrap();
        assert_eq!(ratio, "1");
    }
}

#[test]
fn bad_kappa_scale_is_rejected() {
    let out = bin()
        .arg("sweep")
        .arg(scenario("smoke.scn"))
        .arg("--kappa-scale")
        .arg("1,banana")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
