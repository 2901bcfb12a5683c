//! End-to-end CLI tests: subcommand plumbing, exit codes, config-file
//! handling, and equivalence between the CLI pipeline and the library API.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dmavae::estimate::estimate_effects;
use dmavae::io;
use dmavae::model::{make_dmavae, ModelConfig};
use dmavae::train::{train, TrainConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dmavae"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

#[test]
fn generate_writes_dataset_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("gen"));
    run_ok(&["generate", "--n", "100", "--seed", "3", "--out", &out]);
    let csv = fs::read_to_string(dir.path().join("gen/dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    let truth = io::read_truth_kv(&dir.path().join("gen/truth.kv")).unwrap();
    assert_eq!(
        (truth.nde, truth.nie, truth.nie_r, truth.te),
        (0.8, 0.5, -0.5, 1.3)
    );
}

#[test]
fn generate_same_seed_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        run_ok(&[
            "generate",
            "--n",
            "50",
            "--seed",
            "9",
            "--out",
            &s(&dir.path().join(name)),
        ]);
    }
    for file in ["dataset.csv", "truth.kv", "spec.kv"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn cli_pipeline_matches_library_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let gen = s(&dir.path().join("gen"));
    run_ok(&["generate", "--n", "300", "--seed", "7", "--out", &gen]);
    let data_path = dir.path().join("gen/dataset.csv");
    run_ok(&[
        "train",
        "--data",
        &s(&data_path),
        "--epochs",
        "5",
        "--batch-size",
        "64",
        "--hidden",
        "8",
        "--seed",
        "7",
        "--out",
        &s(&dir.path().join("tr")),
    ]);
    run_ok(&[
        "estimate",
        "--data",
        &s(&data_path),
        "--checkpoint",
        &s(&dir.path().join("tr/checkpoint.json")),
        "--samples",
        "20",
        "--seed",
        "7",
        "--out",
        &s(&dir.path().join("est")),
    ]);
    let cli_est = io::read_estimate(&dir.path().join("est/estimate.json")).unwrap();

    // same steps through the library API with equal seeds
    let data = io::read_dataset_csv(&data_path).unwrap();
    let mc = ModelConfig {
        d_x: data.d_x(),
        m_kind: data.m_kind,
        y_kind: data.y_kind,
        hidden: vec![8],
        seed: 7,
        ..ModelConfig::default()
    };
    let mut model = make_dmavae(&mc).unwrap();
    let tc = TrainConfig {
        epochs: 5,
        batch_size: 64,
        seed: 7,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &tc).unwrap();
    let lib_est = estimate_effects(&model, &data, 20, 7).unwrap();
    assert_eq!(cli_est, lib_est);
}

#[test]
fn estimate_kind_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let gen = s(&dir.path().join("gen"));
    run_ok(&["generate", "--n", "200", "--seed", "4", "--out", &gen]);
    let data_path = dir.path().join("gen/dataset.csv");
    run_ok(&[
        "train",
        "--data",
        &s(&data_path),
        "--epochs",
        "2",
        "--batch-size",
        "50",
        "--hidden",
        "4",
        "--out",
        &s(&dir.path().join("tr")),
    ]);
    // rewrite the mediator column as {0,1} so its kind is re-inferred binary
    let mut data = io::read_dataset_csv(&data_path).unwrap();
    for m in &mut data.m {
        *m = if *m > 0.0 { 1.0 } else { 0.0 };
    }
    let binary_path = dir.path().join("binary.csv");
    io::write_dataset_csv(&binary_path, &data).unwrap();
    let out = bin()
        .args([
            "estimate",
            "--data",
            &s(&binary_path),
            "--checkpoint",
            &s(&dir.path().join("tr/checkpoint.json")),
            "--out",
            &s(&dir.path().join("est")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("do not match"), "stderr: {stderr}");
}

#[test]
fn bench_one_cell_writes_all_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bn");
    run_ok(&[
        "bench",
        "--methods",
        "lsem",
        "--cases",
        "full",
        "--sizes",
        "400",
        "--reps",
        "1",
        "--targets",
        "nde",
        "--seed",
        "2",
        "--out",
        &s(&out),
    ]);
    for file in ["cells.csv", "aggregates.csv", "report.json", "bias_nde.svg"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
}

#[test]
fn missing_input_exits_2() {
    let out = bin()
        .args([
            "estimate",
            "--data",
            "nope.csv",
            "--checkpoint",
            "nope.json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let out = bin().args(["generate", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(
        &cfg_path,
        format!(
            "# generation settings\nn = 40\nseed = 5\nout = {}\n",
            s(&dir.path().join("from_cfg"))
        ),
    )
    .unwrap();
    run_ok(&["generate", "--config", &s(&cfg_path)]);
    let csv = fs::read_to_string(dir.path().join("from_cfg/dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);

    // the flag overrides the config value for n
    run_ok(&[
        "generate",
        "--config",
        &s(&cfg_path),
        "--n",
        "10",
        "--out",
        &s(&dir.path().join("from_flag")),
    ]);
    let csv = fs::read_to_string(dir.path().join("from_flag/dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    fs::write(&cfg_path, "this is not a key value line\n").unwrap();
    let out = bin()
        .args(["generate", "--config", &s(&cfg_path)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn audit_large_tau_flags_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let gen = s(&dir.path().join("gen"));
    run_ok(&["generate", "--n", "300", "--seed", "6", "--out", &gen]);
    let out = s(&dir.path().join("aud"));
    run_ok(&[
        "audit",
        "--data",
        &s(&dir.path().join("gen/dataset.csv")),
        "--epochs",
        "3",
        "--batch-size",
        "64",
        "--hidden",
        "4",
        "--samples",
        "10",
        "--tau",
        "1000",
        "--seed",
        "6",
        "--out",
        &out,
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("aud/audit.json")).unwrap())
            .unwrap();
    assert_eq!(report["direct_flag"], false);
    assert_eq!(report["indirect_flag"], false);
    assert_eq!(report["tau"], 1000.0);
}

#[test]
fn audit_requires_exactly_one_input() {
    let out = bin().args(["audit"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
