//! End-to-end runs of the command-line binary against a temporary catalog.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tensorjoin"))
}

fn write_catalog(dir: &Path) {
    std::fs::write(dir.join("A.csv"), "ID,Val\n1,10\n2,20\n3,30\n").unwrap();
    std::fs::write(dir.join("B.csv"), "ID,Val\n2,200\n3,300\n4,400\n").unwrap();
}

fn write_config(path: &Path) {
    std::fs::write(
        path,
        r#"{
            "alpha_scan": 1e-8,
            "parallel_width_p": 2048.0,
            "bandwidth_sim": 8e9,
            "peak_dense_flops": 1e10,
            "peak_spmm_flops": 5e9,
            "peak_blocked_flops": 8e9,
            "beta_hash": 4e-7,
            "density_threshold": 0.0004,
            "device_budget_bytes": 268435456
        }"#,
    )
    .unwrap();
}

#[test]
fn query_human_output_prints_rows() {
    let dir = tempfile::tempdir().unwrap();
    write_catalog(dir.path());
    let config = dir.path().join("calibration.json");
    write_config(&config);
    let out = bin()
        .args([
            "--catalog",
            dir.path().to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "query",
            "SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID",
            "--verify",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("20 | 200"), "{stdout}");
    assert!(stdout.contains("(2 rows)"), "{stdout}");
    assert!(stdout.contains("MAPE 0.000000%"), "{stdout}");
}

#[test]
fn query_json_output_is_single_document() {
    let dir = tempfile::tempdir().unwrap();
    write_catalog(dir.path());
    let config = dir.path().join("calibration.json");
    write_config(&config);
    let out = bin()
        .args([
            "--catalog",
            dir.path().to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--output",
            "json",
            "query",
            "SELECT SUM(A.Val), B.Val FROM A, B WHERE A.ID = B.ID GROUP BY B.Val",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc.get("result").is_some());
    assert!(doc.get("stages").is_some());
    let stages = doc.get("stages").unwrap();
    for key in ["fill_matrices", "device_copy", "compute", "decode", "other"] {
        assert!(stages.get(key).is_some(), "missing stage {key}");
    }
}

#[test]
fn explain_prints_plan_without_executing() {
    let dir = tempfile::tempdir().unwrap();
    write_catalog(dir.path());
    let config = dir.path().join("calibration.json");
    write_config(&config);
    let out = bin()
        .args([
            "--catalog",
            dir.path().to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "query",
            "SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID",
            "--explain",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["pattern"], "TwoWayJoin");
    assert!(doc.get("estimated_cost").is_some());
    assert!(doc.get("result").is_none());
}

#[test]
fn parse_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    write_catalog(dir.path());
    let config = dir.path().join("calibration.json");
    write_config(&config);
    let out = bin()
        .args([
            "--catalog",
            dir.path().to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "query",
            "SELECT * FROM A",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unsupported"), "{stderr}");
}

#[test]
fn force_matmul_on_unrepresentable_values_exits_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("A.csv"), "ID,Val\n1,100000\n").unwrap();
    std::fs::write(dir.path().join("B.csv"), "ID,Val\n1,100000\n").unwrap();
    let config = dir.path().join("calibration.json");
    write_config(&config);
    let out = bin()
        .args([
            "--catalog",
            dir.path().to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "query",
            "SELECT SUM(A.Val * B.Val) FROM A, B WHERE A.ID = B.ID",
            "--mode",
            "force-matmul",
            "--precision",
            "half",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("re-plan"), "{stderr}");
}

#[test]
fn config_env_var_overrides_default_path() {
    let dir = tempfile::tempdir().unwrap();
    write_catalog(dir.path());
    let config = dir.path().join("custom-config.json");
    write_config(&config);
    let out = bin()
        .env("TENSORJOIN_CONFIG", config.to_str().unwrap())
        .current_dir(dir.path())
        .args([
            "--catalog",
            dir.path().to_str().unwrap(),
            "query",
            "SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // the default calibration.json must not have been created
    assert!(!dir.path().join("calibration.json").exists());
}

#[test]
fn bench_precision_emits_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("calibration.json");
    write_config(&config);
    let out = bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--output",
            "json",
            "bench",
            "precision",
            "--dims",
            "48,64",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 8, "4 ranges x 2 dims: {stdout}");
    for line in lines {
        let doc: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(doc.get("range").is_some());
        assert!(doc.get("dim").is_some());
    }
}

#[test]
fn bench_micro_reports_kernel_and_mape() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("calibration.json");
    write_config(&config);
    let out = bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "bench",
            "micro",
            "--m",
            "512",
            "--k",
            "16",
            "--query",
            "q3",
            "--mode",
            "force-matmul",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["mape"], 0.0);
    assert_eq!(doc["bench"], "micro");
}
