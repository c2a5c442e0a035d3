use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dirdistill(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirdistill"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("DIRDISTILL_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn grad_ratio_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"k_values": [10, 100]}"#);
    let o = dirdistill(
        &["grad-ratio", "--config", &cfg, "--dump-grads", "-q"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("grad_ratio.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# dirdistill"));
    assert_eq!(lines.next(), Some("scenario,loss,K,rho"));
    assert!(dir.path().join("grad_ratio_grads.json").exists());
    assert!(o.stdout.is_empty());
}

#[test]
fn fit_proxy_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"members": [[0.8, 0.2], [0.6, 0.4]]}"#,
    );
    let o = dirdistill(&["fit-proxy", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("proxy.json")).unwrap()).unwrap();
    let beta = &v["report"]["beta"]["alpha"];
    assert!((beta[0].as_f64().unwrap() - 15.07).abs() < 0.01, "{v}");
    assert!((beta[1].as_f64().unwrap() - 7.03).abs() < 0.01);
    assert_eq!(v["build"], dirdistill::BUILD_ID);
}

#[test]
fn uncertainty_takes_exactly_one_source() {
    let dir = tempfile::tempdir().unwrap();
    for (cfg, ok) in [
        (r#"{"alpha": [1.0, 2.0, 3.0]}"#, true),
        (r#"{"members": [[0.5, 0.5], [0.9, 0.1]]}"#, true),
        (r#"{"alpha": [1.0, 2.0], "members": [[0.5, 0.5]]}"#, false),
        (r#"{}"#, false),
    ] {
        let path = write(dir.path(), "cfg.json", cfg);
        let o = dirdistill(&["uncertainty", "--config", &path], dir.path());
        assert_eq!(
            o.status.code(),
            Some(if ok { 0 } else { 1 }),
            "{cfg}: {}",
            stderr(&o)
        );
    }
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("uncertainty.json")).unwrap())
            .unwrap();
    assert!(v["report"]["mutual_info"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_configs_exit_one_with_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"member": {"lr": 0.1}}"#);
    let o = dirdistill(&["distill-classify", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("member.lr") && !err.contains("panicked"),
        "{err}"
    );

    let o = dirdistill(&["fit-proxy"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = dirdistill(
        &["selftest", "--config", "/nonexistent/cfg.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = dirdistill(&["no-such-command"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn version_and_selftest() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dirdistill"))
        .arg("--version")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout).trim(),
        dirdistill::BUILD_ID
    );

    let o = dirdistill(&["selftest"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("selftest.csv")).unwrap();
    assert!(
        csv.lines()
            .skip(2)
            .all(|l| l.split(',').nth(1) == Some("true")),
        "{csv}"
    );
    let log = fs::read_to_string(dir.path().join("run.log")).unwrap();
    assert!(log.contains("command: selftest") && log.contains("status: ok"));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"alpha": [1.0, 1.0]}"#);
    let o = Command::new(env!("CARGO_BIN_EXE_dirdistill"))
        .args(["uncertainty", "--config", &cfg, "--out"])
        .arg(dir.path())
        .env("DIRDISTILL_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(dir.path().join("run.log")).unwrap();
    assert!(log.contains("threads: 3"), "{log}");
}

const SMALL_SEQ: &str = r#"{
  "task": {"content_tokens": 5, "tags": 2, "ood_tags": 2, "train_per_tag": 20, "test_per_tag": 4, "max_len": 8},
  "teachers": 2,
  "hidden_dim": 8,
  "teacher_train": {"epochs": 3},
  "student_train": {"epochs": 3},
  "mc_samples": 4
}"#;

#[test]
fn distill_seq_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL_SEQ);
    let files = [
        "metrics.json",
        "uncertainty.csv",
        "loss_trace.csv",
        "transfer.ndjson",
    ];
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("run{threads}"));
        let o = dirdistill(
            &["distill-seq", "--config", &cfg, "--threads", threads],
            &out,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(files.map(|f| fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    let uncertainty = String::from_utf8(runs[0][1].clone()).unwrap();
    assert_eq!(uncertainty.lines().nth(1), Some("input_id,H,I,K,M,S"));
    // 8 test plus 8 OOD inputs
    assert_eq!(uncertainty.lines().count(), 2 + 16);
}
