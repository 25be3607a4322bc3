use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_visuomotor"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(o.status.success(), "{args:?} failed: {stderr}");
    String::from_utf8(o.stdout).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn metric(path: &Path, name: &str) -> f64 {
    let rows = csv_rows(path);
    let row = rows.iter().find(|r| r[0] == name).unwrap_or_else(|| panic!("no {name}"));
    row[1].parse().unwrap()
}

#[test]
fn synth_writes_the_corpus_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth"]);
    let count = |split: &str| fs::read_dir(dir.path().join("data").join(split)).unwrap().count();
    assert_eq!((count("train"), count("test")), (60, 60));
    assert!(dir.path().join("data/manifest.toml").is_file());

    let manifest: toml::Table = fs::read_to_string(dir.path().join("manifest_synth.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["verb"].as_str(), Some("synth"));
    assert_eq!(manifest["seed"].as_integer(), Some(1));
    assert!(manifest["config"].as_str().unwrap().contains("tau_v = 10"));

    // Same seed, same bytes.
    let again = tempfile::tempdir().unwrap();
    ok(again.path(), &["synth"]);
    let a = fs::read(dir.path().join("data/manifest.toml")).unwrap();
    let b = fs::read(again.path().join("data/manifest.toml")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trained_generator_beats_its_first_training_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth"]);
    ok(out, &["train-visual"]);
    let curve: Vec<f64> = csv_rows(&out.join("visual_curve.csv"))[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(curve.len(), 10_000);

    ok(out, &["eval", "--split", "train"]);
    let visual = metric(&out.join("eval.csv"), "visual_error");
    assert!(visual <= curve[0], "eval {visual} vs first iteration {}", curve[0]);

    let manifest = fs::read_to_string(out.join("manifest_eval.toml")).unwrap();
    assert!(manifest.contains("[[input]]"));
    assert!(manifest.contains("inputs_hash"));
}

#[test]
fn perturbation_from_a_checkpoint_and_dimension_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth", "--per-class", "10"]);
    let fast = ["--set", "iterations=500", "--set", "motor_iterations=500", "--set", "n=20"];
    ok(out, &[&["train-visual"][..], &fast].concat());
    ok(out, &[&["train-motor"][..], &fast].concat());
    assert!(out.join("motor_curve.csv").is_file());

    let agent = out.join("agent");
    let agent = agent.to_str().unwrap();
    ok(out, &["experiment", "perturbation", "--checkpoint", agent]);
    let rows = csv_rows(&out.join("experiments/perturbation.csv"));
    assert_eq!(rows[0], ["sigma2", "controlled_mean", "controlled_se", "uncontrolled_mean", "uncontrolled_se"]);
    assert_eq!(rows.len(), 1 + 6);
    assert!(rows[1..].iter().flatten().all(|v| v.parse::<f64>().unwrap().is_finite()));
    assert!(out.join("experiments/figures").is_dir());

    let o = run(out, &["eval", "--set", "n=50"]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("hidden size"), "{stderr}");

    ok(out, &["plot"]);
    for f in ["heatmap_a.svg", "arm_b.svg", "trajectories.svg"] {
        assert!(out.join("plots").join(f).is_file(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["synth", "--set", "no_such_key=1"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["synth", "--set", "tau_v=0.5"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["eval"]).status.code(), Some(3));
    let missing = dir.path().join("nowhere");
    assert_eq!(run(dir.path(), &["ingest", "--input", missing.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}
