//! Black-box tests of the `engage` binary: artifact layout, exit codes,
//! determinism flags, and both on-disk dataset formats. Every run here uses
//! tiny epoch/probe budgets — correctness of the numbers is covered by the
//! library tests and the acceptance suite.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn engage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_engage"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn run_ok(args: &[&str]) -> String {
    let out = engage(args);
    assert!(
        out.status.success(),
        "expected success for {:?}\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout should be UTF-8")
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

/// Short training run shared by most tests below.
fn fast_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "run",
        "--epochs",
        "3",
        "--probe-epochs",
        "40",
        "--seed",
        "1",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn run_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let stdout = run_ok(&fast_args(
        out_s,
        &["--lambda-e", "2", "--lambda-f", "2", "--dump-explanations"],
    ));
    assert!(stdout.contains("probe acc"), "stdout: {stdout}");

    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["run_id"].as_str().unwrap().len(), 12);
    assert_eq!(metrics["dataset"], "synthetic:motif");
    assert_eq!(metrics["mode"], "engage");
    assert_eq!(metrics["framework"], "simclr");
    assert_eq!(metrics["lambda_e"], 2.0);
    assert_eq!(metrics["seed"], 1);
    assert_eq!(metrics["epochs"], 3);
    let acc = metrics["probe_mean_acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc), "probe acc {acc}");
    assert!(metrics["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(metrics["final_loss"].as_f64().is_some());

    let sparsity = fs::read_to_string(out.join("sparsity.csv")).unwrap();
    let lines: Vec<&str> = sparsity.lines().collect();
    assert_eq!(lines[0], "epoch,mean_sparsity");
    assert_eq!(lines.len(), 1 + 3, "one row per epoch");
    // Warmup epochs train without guided explanations; their sparsity is
    // recorded as a literal NaN.
    assert!(lines[1].starts_with("0,"));

    let ckpt = fs::metadata(out.join("checkpoint.bin")).unwrap();
    assert!(ckpt.len() > 0, "checkpoint should be non-empty");

    let tsv = fs::read_to_string(out.join("explanations.tsv")).unwrap();
    let mut rows = tsv.lines();
    assert_eq!(rows.next().unwrap(), "graph_id\tnode_id\tpsi\tpsi01");
    assert!(rows.next().is_some(), "expected at least one attribution row");
}

#[test]
fn stable_timing_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&fast_args(out.to_str().unwrap(), &["--stable-timing"]));
    }
    for name in ["metrics.json", "sparsity.csv"] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} should be byte-identical");
    }
}

#[test]
fn unknown_mode_exits_2_with_config_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let result = engage(&[
        "run",
        "--mode",
        "chaotic",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let record = read_json(&out.join("error.json"));
    assert_eq!(record["kind"], "config");
    assert!(record["message"].as_str().unwrap().contains("chaotic"));
}

#[test]
fn missing_dataset_dir_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let missing = dir.path().join("definitely-absent");
    let spec = format!("tudataset:NOPE:{}", missing.display());
    let result = engage(&["run", "--dataset", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    let record = read_json(&out.join("error.json"));
    let kind = record["kind"].as_str().unwrap();
    assert!(kind == "parse" || kind == "io", "unexpected kind {kind}");
}

#[test]
fn sweep_writes_grid_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    run_ok(&[
        "sweep",
        "--lambda-es",
        "-2,2",
        "--lambda-fs",
        "0",
        "--seeds",
        "1,2",
        "--epochs",
        "2",
        "--probe-epochs",
        "30",
        "--out",
        out.to_str().unwrap(),
    ]);

    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lambda_e,lambda_f,seed,probe_mean_acc,probe_std_acc");
    // Two lambda_e values x one lambda_f value x two seeds.
    assert_eq!(lines.len(), 1 + 4, "header plus one row per (cell, seed)");

    let summary = read_json(&out.join("sweep_summary.json"));
    let cells = summary["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    let gap = summary["performance_gap"].as_f64().unwrap();
    assert!(gap >= 0.0 && gap.is_finite());
    assert_eq!(summary["seeds"], serde_json::json!([1, 2]));
}

#[test]
fn random_mode_ignores_severity_knobs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&fast_args(
        a.to_str().unwrap(),
        &["--mode", "random", "--lambda-e", "2", "--lambda-f", "2", "--stable-timing"],
    ));
    run_ok(&fast_args(
        b.to_str().unwrap(),
        &["--mode", "random", "--lambda-e", "-2", "--lambda-f", "-2", "--stable-timing"],
    ));
    let ma = read_json(&a.join("metrics.json"));
    let mb = read_json(&b.join("metrics.json"));
    assert_eq!(ma["probe_mean_acc"], mb["probe_mean_acc"]);
    assert_eq!(ma["final_loss"], mb["final_loss"]);
    assert_eq!(ma["mask_keep_rate_edge"], mb["mask_keep_rate_edge"]);
}

#[test]
fn tudataset_roundtrip_trains() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let (ds, _) = engage_cli::pipeline::motif_dataset().unwrap();
    engage_core::graph::write_tudataset(&ds, &data, "SYN").unwrap();

    let out = dir.path().join("run");
    let spec = format!("tudataset:SYN:{}", data.display());
    run_ok(&[
        "run",
        "--dataset",
        &spec,
        "--epochs",
        "2",
        "--probe-epochs",
        "30",
        "--out",
        out.to_str().unwrap(),
    ]);
    let metrics = read_json(&out.join("metrics.json"));
    assert!(metrics["dataset"].as_str().unwrap().contains("SYN"));
}

#[test]
fn nodeset_trains_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("graph");
    fs::create_dir_all(&data).unwrap();

    // A 16-node ring with a couple of chords; features carry a weak
    // positional signal and labels alternate around the ring.
    let n = 16usize;
    let mut edges = String::new();
    for i in 0..n {
        edges.push_str(&format!("{} {}\n", i, (i + 1) % n));
    }
    edges.push_str("0 8\n4 12\n");
    fs::write(data.join("edges.txt"), edges).unwrap();

    let mut features = String::new();
    for i in 0..n {
        features.push_str(&format!(
            "{} {} 1.0\n",
            i as f64 / n as f64,
            ((i * 7) % n) as f64 / n as f64
        ));
    }
    fs::write(data.join("features.txt"), features).unwrap();

    let labels: String = (0..n).map(|i| format!("{}\n", i % 2)).collect();
    fs::write(data.join("labels.txt"), labels).unwrap();

    let out = dir.path().join("run");
    let spec = format!("nodeset:{}", data.display());
    run_ok(&[
        "run",
        "--dataset",
        &spec,
        "--epochs",
        "2",
        "--m",
        "3",
        "--probe-folds",
        "4",
        "--probe-epochs",
        "30",
        "--out",
        out.to_str().unwrap(),
    ]);
    let metrics = read_json(&out.join("metrics.json"));
    let acc = metrics["probe_mean_acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn rd_match_builds_matched_random_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let guided = dir.path().join("guided");
    run_ok(&fast_args(guided.to_str().unwrap(), &[]));
    let source = read_json(&guided.join("metrics.json"));
    let source_rate = source["mask_keep_rate_edge"].as_f64().unwrap();

    let baseline = dir.path().join("baseline");
    let metrics_path = guided.join("metrics.json");
    let mut args = fast_args(baseline.to_str().unwrap(), &["--rd-match"]);
    let path_s = metrics_path.to_str().unwrap();
    args.push(path_s);
    run_ok(&args);

    let matched = read_json(&baseline.join("metrics.json"));
    assert_eq!(matched["mode"], "random");
    let rate = matched["mask_keep_rate_edge"].as_f64().unwrap();
    assert!(
        (rate - source_rate).abs() < 0.2,
        "realized keep rate {rate} should track the source rate {source_rate}"
    );
}
