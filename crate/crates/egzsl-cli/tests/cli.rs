//! End-to-end tests of the `egzsl` binary: pipeline smoke, exit codes, flag
//! equivalences, and file outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use egzsl_core::{
    evaluate_static, evolution_curve, load_bundle, CompatibilityModel, ReportDocument,
};

fn egzsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egzsl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Small synthetic bundle + checkpoint, shared across tests.
fn make_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("bundle");
    let model = dir.join("base.ckpt");
    let out = egzsl(&[
        "synth",
        "--out",
        &path_str(&data),
        "--seed",
        "8",
        "--num-seen",
        "4",
        "--num-unseen",
        "2",
        "--dx",
        "16",
        "--da",
        "8",
        "--base-per-class",
        "60",
        "--test-per-class",
        "40",
        "--spread",
        "0.4",
        "--map-noise",
        "0.35",
        "--attr-latent",
        "3",
    ]);
    assert!(out.status.success(), "synth failed: {out:?}");
    let out = egzsl(&[
        "base-train",
        "--data",
        &path_str(&data),
        "--out",
        &path_str(&model),
        "--epochs",
        "6",
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "base-train failed: {out:?}");
    (data, model)
}

#[test]
fn pipeline_smoke_and_stdout_json() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = make_fixture(dir.path());

    // base-train stdout is one JSON line with training accuracy.
    let out = egzsl(&[
        "base-train",
        "--data",
        &path_str(&data),
        "--out",
        &path_str(&dir.path().join("m2.ckpt")),
        "--epochs",
        "3",
    ]);
    let line = String::from_utf8(out.stdout).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert!(parsed["seen_train_accuracy"].as_f64().unwrap() > 0.5);

    let report = dir.path().join("report.json");
    let csv = dir.path().join("stages.csv");
    let out = egzsl(&[
        "evolve",
        "--data",
        &path_str(&data),
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&report),
        "--stage-csv",
        &path_str(&csv),
        "--stage-size",
        "25",
        "--seeds",
        "0,1",
        "--lr",
        "1e-3",
    ]);
    assert!(out.status.success(), "evolve failed: {out:?}");
    let summary: serde_json::Value =
        serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    assert!(summary["harmonic"]["mean"].as_f64().unwrap() > 0.0);

    let doc: ReportDocument = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc.seeds, vec![0, 1]);
    assert_eq!(doc.runs.len(), 2);
    let csv_text = fs::read_to_string(&csv).unwrap();
    let rows = csv_text.lines().count() - 1;
    let stages: usize = doc.runs.iter().map(|r| r.stages.len()).sum();
    assert_eq!(rows, stages);
}

#[test]
fn repeated_synth_and_base_train_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| -> Vec<String> {
        [
            "synth",
            "--out",
            &path_str(out),
            "--seed",
            "5",
            "--num-seen",
            "3",
            "--num-unseen",
            "2",
            "--dx",
            "10",
            "--da",
            "5",
            "--base-per-class",
            "20",
            "--test-per-class",
            "10",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let d1 = dir.path().join("one");
    let d2 = dir.path().join("two");
    for d in [&d1, &d2] {
        let out = Command::new(env!("CARGO_BIN_EXE_egzsl"))
            .args(args(d))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    for f in [
        "meta.json",
        "features.bin",
        "labels.bin",
        "attributes.bin",
        "splits.json",
    ] {
        assert_eq!(
            fs::read(d1.join(f)).unwrap(),
            fs::read(d2.join(f)).unwrap(),
            "{f} differs between identical synth runs"
        );
    }
    let c1 = dir.path().join("one.ckpt");
    let c2 = dir.path().join("two.ckpt");
    for (data, ckpt) in [(&d1, &c1), (&d1, &c2)] {
        let out = egzsl(&[
            "base-train",
            "--data",
            &path_str(data),
            "--out",
            &path_str(ckpt),
            "--epochs",
            "4",
            "--seed",
            "2",
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&c1).unwrap(), fs::read(&c2).unwrap());
}

#[test]
fn evolve_defaults_echo_canonical_values() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = make_fixture(dir.path());
    let report = dir.path().join("defaults.json");
    let out = egzsl(&[
        "evolve",
        "--data",
        &path_str(&data),
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&report),
        "--seeds",
        "0",
        "--stage-size",
        "40",
    ]);
    assert!(out.status.success(), "{out:?}");
    let doc: ReportDocument = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc.config.lambda, 1.0);
    assert_eq!(doc.config.tau, 0.5);
    assert_eq!(doc.config.ema_momentum, 0.99);
    assert_eq!(doc.config.confidence_momentum, 0.9);
    assert_eq!(doc.config.learning_rate, 5e-5);
    assert_eq!(doc.config.epochs_per_stage, 1);
    assert_eq!(doc.stage_size, 40);
    assert_eq!(doc.prng, egzsl_core::PRNG_ID);
}

#[test]
fn synth_rejects_zero_dx_with_usage_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = egzsl(&[
        "synth",
        "--out",
        &path_str(&dir.path().join("b")),
        "--dx",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("dx"), "stderr should name dx: {err}");
}

#[test]
fn conflicting_selection_flags_are_usage_errors() {
    let out = egzsl(&[
        "evolve",
        "--data",
        "x",
        "--model",
        "y",
        "--out",
        "z",
        "--no-data-sel",
        "--fixed-threshold",
        "0.8",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_bundle_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = egzsl(&[
        "evolve",
        "--data",
        &path_str(&dir.path().join("nope")),
        "--model",
        &path_str(&dir.path().join("nope.ckpt")),
        "--out",
        &path_str(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_requires_inputs() {
    let out = egzsl(&["report"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn erm_flag_equals_three_switches() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = make_fixture(dir.path());
    let a = dir.path().join("erm.json");
    let b = dir.path().join("flags.json");
    let common = [
        "--data".to_string(),
        path_str(&data),
        "--model".to_string(),
        path_str(&model),
        "--stage-size".to_string(),
        "20".to_string(),
        "--seeds".to_string(),
        "0".to_string(),
        "--lr".to_string(),
        "1e-3".to_string(),
    ];
    let mut args_a: Vec<String> = vec!["evolve".into()];
    args_a.extend(common.iter().cloned());
    args_a.extend(["--out".into(), path_str(&a), "--erm".into()]);
    let mut args_b: Vec<String> = vec!["evolve".into()];
    args_b.extend(common.iter().cloned());
    args_b.extend([
        "--out".into(),
        path_str(&b),
        "--no-momentum".into(),
        "--no-class-sel".into(),
        "--no-data-sel".into(),
    ]);
    let run = |args: &[String]| {
        let out = Command::new(env!("CARGO_BIN_EXE_egzsl"))
            .args(args)
            .output()
            .unwrap();
        assert!(out.status.success(), "{out:?}");
    };
    run(&args_a);
    run(&args_b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn zero_learning_rate_reproduces_static_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = make_fixture(dir.path());
    let report = dir.path().join("frozen.json");
    let out = egzsl(&[
        "evolve",
        "--data",
        &path_str(&data),
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&report),
        "--stage-size",
        "30",
        "--seeds",
        "3",
        "--lr",
        "0",
    ]);
    assert!(out.status.success(), "{out:?}");
    let doc: ReportDocument = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let bundle = load_bundle(&data).unwrap();
    let base = CompatibilityModel::load(&model).unwrap();
    let static_m = evaluate_static(&base, &bundle).unwrap();
    assert_eq!(doc.aggregate.harmonic.mean, static_m.harmonic);
    assert_eq!(doc.aggregate.acc_seen.mean, static_m.acc_seen);
    assert_eq!(doc.aggregate.acc_unseen.mean, static_m.acc_unseen);
}

#[test]
fn merging_single_seed_reports_reproduces_multi_seed_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = make_fixture(dir.path());
    let mut singles = Vec::new();
    for seed in ["0", "1", "2"] {
        let path = dir.path().join(format!("s{seed}.json"));
        let out = egzsl(&[
            "evolve",
            "--data",
            &path_str(&data),
            "--model",
            &path_str(&model),
            "--out",
            &path_str(&path),
            "--stage-size",
            "20",
            "--seeds",
            seed,
            "--lr",
            "1e-3",
        ]);
        assert!(out.status.success());
        singles.push(path);
    }
    let multi = dir.path().join("multi.json");
    let out = egzsl(&[
        "evolve",
        "--data",
        &path_str(&data),
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&multi),
        "--stage-size",
        "20",
        "--seeds",
        "0,1,2",
        "--lr",
        "1e-3",
    ]);
    assert!(out.status.success());
    let multi_doc: ReportDocument =
        serde_json::from_str(&fs::read_to_string(&multi).unwrap()).unwrap();

    let args: Vec<String> = ["report"]
        .iter()
        .map(|s| s.to_string())
        .chain(singles.iter().map(|p| path_str(p)))
        .chain(["--csv".to_string()])
        .collect();
    let out = Command::new(env!("CARGO_BIN_EXE_egzsl"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let merged_line = text
        .lines()
        .find(|l| l.starts_with("merged,"))
        .expect("merged row present");
    let cols: Vec<&str> = merged_line.split(',').collect();
    let mean: f64 = cols[6].parse().unwrap();
    let std: f64 = cols[7].parse().unwrap();
    assert!((mean - multi_doc.aggregate.harmonic.mean).abs() < 1e-12);
    assert!((std - multi_doc.aggregate.harmonic.std).abs() < 1e-12);
}

#[test]
fn report_table_has_stable_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = make_fixture(dir.path());
    let path = dir.path().join("r.json");
    let out = egzsl(&[
        "evolve",
        "--data",
        &path_str(&data),
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&path),
        "--stage-size",
        "40",
        "--seeds",
        "0",
    ]);
    assert!(out.status.success());
    let out = egzsl(&["report", &path_str(&path)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("report"));
    for col in ["seeds", "A_u", "A_s", "H"] {
        assert!(header.contains(col), "missing column {col}: {header}");
    }
}

#[test]
fn snapshots_replay_the_reported_curve() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = make_fixture(dir.path());
    let report = dir.path().join("curve.json");
    let snapdir = dir.path().join("snaps");
    let out = egzsl(&[
        "evolve",
        "--data",
        &path_str(&data),
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&report),
        "--stage-size",
        "30",
        "--seeds",
        "2",
        "--lr",
        "1e-3",
        "--curve-stride",
        "3",
        "--snapshot-dir",
        &path_str(&snapdir),
    ]);
    assert!(out.status.success(), "{out:?}");
    let doc: ReportDocument = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let curve = &doc.runs[0].diagnostic_curve;
    assert!(curve.len() >= 2);
    // Reload every snapshot checkpoint and recompute the curve from scratch.
    let bundle = load_bundle(&data).unwrap();
    let mut snapshots = Vec::new();
    for p in curve {
        let file = snapdir
            .join("seed_2")
            .join(format!("snapshot_{:05}.ckpt", p.time_step));
        snapshots.push((p.time_step, CompatibilityModel::load(&file).unwrap()));
    }
    let replayed = evolution_curve(&snapshots, &bundle).unwrap();
    assert_eq!(&replayed, curve);
}
