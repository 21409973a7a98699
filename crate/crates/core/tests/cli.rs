//! Exit codes and outputs of the `hetnet` binary.

use std::path::Path;
use std::process::{Command, Output};

fn hetnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetnet")).args(args).env_remove("HETNET_THREADS").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn small_config(dir: &Path, methods: &str) -> String {
    let path = dir.join("spec.toml");
    std::fs::write(
        &path,
        format!("[scenario]\nnum_cells = 2\nusers_per_cell = 4\nwraparound = false\n\n[run]\nseeds = [0]\nmethods = [{methods}]\n"),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn assoc_writes_reports_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"max-sinr\", \"dcd\"");
    let out_dir = dir.path().join("out");
    let out = hetnet(&["assoc", "--config", &cfg, "--seed", "0,1", "--out", out_dir.to_str().unwrap(), "--trace"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max-sinr") && stdout.contains("dcd"));
    for f in ["utility.csv", "loads.csv", "summary.json", "rates_1_dcd.csv", "trace_0_dcd.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let utility = std::fs::read_to_string(out_dir.join("utility.csv")).unwrap();
    assert_eq!(utility.lines().count(), 5);
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"dcd\"");
    assert_eq!(code(&hetnet(&["assoc", "--config", &cfg, "--method", "bogus"])), 1);
    assert_eq!(code(&hetnet(&["assoc", "--config", &cfg, "--method", "joint-dcd"])), 1);
    assert_eq!(code(&hetnet(&["assoc", "--config", &cfg, "--seed", "x"])), 1);
    assert_eq!(code(&hetnet(&["mimo", "--config", &cfg])), 1);
    assert_eq!(code(&hetnet(&["assoc", "--config", "/nonexistent/spec.toml"])), 1);
    assert_eq!(code(&hetnet(&["frobnicate"])), 1);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scenario]\nnum_cells = 0\n").unwrap();
    assert_eq!(code(&hetnet(&["assoc", "--config", bad.to_str().unwrap()])), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_hetnet"))
        .args(["assoc", "--config", &cfg])
        .env("HETNET_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn oracle_and_gen_on_tiny_instances() {
    let dir = tempfile::tempdir().unwrap();
    let out = hetnet(&["oracle", "--seed", "0..3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert!(rows.as_array().unwrap().iter().all(|r| r["certificate_holds"] == true));

    let cfg = small_config(dir.path(), "\"dcd\"");
    let out = hetnet(&["gen", "--config", &cfg, "--seed", "5"]);
    assert_eq!(code(&out), 0);
    let inst: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(inst["num_users"], 8);
}

#[test]
fn joint_and_bench_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"joint-dcd\", \"joint-maxsinr\"");
    assert_eq!(code(&hetnet(&["joint", "--config", &cfg])), 0);
    let out = hetnet(&["bench", "--config", &cfg, "--method", "max-sinr,dcd", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("bench.json").exists());
}
