//! End-to-end runs of the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(config: &Path, out: &Path, threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-forward"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .expect("binary runs")
}

fn results(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join("results.json")).unwrap()).unwrap()
}

#[test]
fn passing_run_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("pde-drift.json"), dir.path(), 1);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = results(dir.path());
    assert_eq!(r["kind"], "pde-drift");
    assert_eq!(r["passed"], true);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 1);
    assert_eq!(m["config"]["experiment"]["kind"], "pde-drift");
}

#[test]
fn results_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":{"kind":"verify-saddle","params":{"simulation":{
            "market":{"sigma":0.2,"lambda_hat":0.3,"delta":1.0},
            "horizon":1.0,"n_steps":20,"n_paths":2000}}},"seed":5}"#,
    )
    .unwrap();
    let outs: Vec<Vec<u8>> = [1, 3, 8]
        .iter()
        .map(|t| {
            let out = dir.path().join(format!("t{t}"));
            run(&cfg, &out, *t);
            std::fs::read(out.join("results.json")).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
}

#[test]
fn schema_errors_exit_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":{"kind":"pde-drift","params":{"penalty":{"type":"quadratic","delta":1.0},"lambda_hat":0.3,"extra":true}}}"#,
    )
    .unwrap();
    let o = run(&cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("extra") && err.contains("experiment.params"), "{err}");

    std::fs::write(&cfg, r#"{"experiment":{"kind":"no-such-kind","params":{}}}"#).unwrap();
    assert_eq!(run(&cfg, &dir.path().join("out"), 1).status.code(), Some(2));
}

#[test]
fn invalid_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero-vol.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":{"kind":"simulate","params":{"simulation":{
            "market":{"sigma":0.0,"lambda_hat":0.3,"delta":1.0},
            "horizon":1.0,"n_steps":10,"n_paths":10}}}}"#,
    )
    .unwrap();
    assert_eq!(run(&cfg, &dir.path().join("out"), 1).status.code(), Some(2));
}

#[test]
fn missing_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&dir.path().join("absent.json"), &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dpp.json");
    let tree = config("trees/non-rectangular.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"experiment":{{"kind":"tree-dpp","params":{{"tree":{{"spec_path":{}}},"expect_holds":true}}}}}}"#,
            serde_json::to_string(&tree).unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&cfg, &out, 1);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(results(&out)["passed"], false);
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed"));
}
