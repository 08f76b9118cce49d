//! End-to-end tests of the `datscan` binary: every subcommand, the
//! artifact contracts between them, and the exit-code discipline.

use datscan_core::metrics::{write_predictions, PredictionRecord};
use datscan_core::ClassLabel;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn datscan() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_datscan"));
    // Keep the host environment from leaking into path resolution.
    cmd.env_remove("DATSCAN_DATA_ROOT");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("spawn datscan");
    assert!(
        output.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn run_err(cmd: &mut Command, expected_code: i32) -> Output {
    let output = cmd.output().expect("spawn datscan");
    assert_eq!(
        output.status.code(),
        Some(expected_code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Render a tiny phantom volume dataset under `dir`.
fn make_volumes(dir: &Path, n_control: usize, n_pd: usize, seed: u64) {
    run_ok(datscan().args([
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--n-control",
        &n_control.to_string(),
        "--n-pd",
        &n_pd.to_string(),
        "--seed",
        &seed.to_string(),
    ]));
}

/// Render and preprocess a tiny image dataset under `dir`.
fn make_images(work: &Path, name: &str, n_control: usize, n_pd: usize, seed: u64) -> PathBuf {
    let volumes = work.join(format!("{name}-volumes"));
    let images = work.join(format!("{name}-images"));
    make_volumes(&volumes, n_control, n_pd, seed);
    run_ok(datscan().args([
        "preprocess",
        "--volumes",
        volumes.to_str().unwrap(),
        "--out",
        images.to_str().unwrap(),
    ]));
    images
}

#[test]
fn help_and_version_exit_zero() {
    run_ok(datscan().arg("--help"));
    run_ok(datscan().arg("--version"));
}

#[test]
fn usage_errors_exit_one() {
    run_err(datscan().arg("no-such-subcommand"), 1);
    run_err(datscan().args(["synth", "--no-such-flag"]), 1);
    run_err(datscan().args(["--config", "/no/such/config.toml", "synth"]), 1);
}

#[test]
fn malformed_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[train]\nepoch = 30\n").unwrap();
    let output = run_err(
        datscan().args(["--config", config.to_str().unwrap(), "synth"]),
        1,
    );
    assert!(stderr_of(&output).contains("bad.toml"));
}

#[test]
fn invalid_config_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "[split]\ntest_fraction = 1.5\n").unwrap();
    run_err(
        datscan().args([
            "--config",
            config.to_str().unwrap(),
            "split",
            "holdout",
            "--images",
            dir.path().to_str().unwrap(),
        ]),
        1,
    );
}

#[test]
fn synth_writes_a_deterministic_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("volumes");
    make_volumes(&out, 3, 2, 11);

    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 6); // header + 5 rows
    assert!(out.join("control/control-0001.vhdr").exists());
    assert!(out.join("pd/pd-0002.vraw").exists());
    assert!(out.join("config.toml").exists());

    // Same seed, fresh directory: byte-identical manifest.
    let again = dir.path().join("again");
    make_volumes(&again, 3, 2, 11);
    let manifest_again = std::fs::read_to_string(again.join("manifest.csv")).unwrap();
    assert_eq!(manifest, manifest_again);
}

#[test]
fn preprocess_builds_the_image_tree() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 2, 3, 21);

    for name in [
        "control/control-0001.png",
        "control/control-0002.png",
        "pd/pd-0001.png",
        "pd/pd-0002.png",
        "pd/pd-0003.png",
    ] {
        assert!(images.join(name).exists(), "missing {name}");
    }
    let manifest = std::fs::read_to_string(images.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 6);

    // Idempotent: rerunning over the same volumes reproduces the tree.
    let first = std::fs::read(images.join("pd/pd-0001.png")).unwrap();
    run_ok(datscan().args([
        "preprocess",
        "--volumes",
        dir.path().join("data-volumes").to_str().unwrap(),
        "--out",
        images.to_str().unwrap(),
    ]));
    assert_eq!(std::fs::read(images.join("pd/pd-0001.png")).unwrap(), first);
}

#[test]
fn preprocess_of_an_empty_manifest_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let volumes = dir.path().join("volumes");
    std::fs::create_dir_all(&volumes).unwrap();
    std::fs::write(volumes.join("manifest.csv"), "subject_id,relative_path,label\n").unwrap();
    let out = dir.path().join("images");
    run_ok(datscan().args([
        "preprocess",
        "--volumes",
        volumes.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert_eq!(std::fs::read_dir(out.join("pd")).unwrap().count(), 0);
}

#[test]
fn preprocess_names_corrupt_volumes_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let volumes = dir.path().join("volumes");
    make_volumes(&volumes, 2, 2, 31);
    // Truncate one payload so it no longer matches its header.
    std::fs::write(volumes.join("pd/pd-0002.vraw"), [0u8; 16]).unwrap();

    let output = run_err(
        datscan().args([
            "preprocess",
            "--volumes",
            volumes.to_str().unwrap(),
            "--out",
            dir.path().join("images").to_str().unwrap(),
        ]),
        2,
    );
    let stderr = stderr_of(&output);
    assert!(stderr.contains("pd-0002"), "stderr: {stderr}");
    assert!(stderr.contains("1 of 4 volumes failed"), "stderr: {stderr}");
}

#[test]
fn missing_manifest_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    run_err(
        datscan().args([
            "preprocess",
            "--volumes",
            dir.path().to_str().unwrap(),
            "--out",
            dir.path().join("images").to_str().unwrap(),
        ]),
        2,
    );
}

#[test]
fn split_kfold_writes_the_fold_plan() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 2, 2, 41);
    let out = dir.path().join("split");
    run_ok(datscan().args([
        "split",
        "kfold",
        "--images",
        images.to_str().unwrap(),
        "--folds",
        "2",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]));

    let csv = std::fs::read_to_string(out.join("folds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5); // header + one row per subject
    let folds: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("folds.json")).unwrap()).unwrap();
    assert_eq!(folds.as_array().unwrap().len(), 2);
}

#[test]
fn split_kfold_with_too_many_folds_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 2, 2, 43);
    run_err(
        datscan().args([
            "split",
            "kfold",
            "--images",
            images.to_str().unwrap(),
            "--folds",
            "5",
        ]),
        2,
    );
}

#[test]
fn split_holdout_materializes_loadable_trees() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 3, 3, 47);
    let out = dir.path().join("split");
    run_ok(datscan().args([
        "split",
        "holdout",
        "--images",
        images.to_str().unwrap(),
        "--test-fraction",
        "0.34",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
        "--materialize",
    ]));

    let train = std::fs::read_to_string(out.join("train.csv")).unwrap();
    let test = std::fs::read_to_string(out.join("test.csv")).unwrap();
    assert_eq!(train.lines().count(), 5); // header + 4
    assert_eq!(test.lines().count(), 3); // header + 2
    // The materialized trees are dataset directories in their own right.
    for part in ["train", "test"] {
        assert!(out.join(part).join("manifest.csv").exists());
    }
    let copied = std::fs::read_dir(out.join("test/pd"))
        .unwrap()
        .chain(std::fs::read_dir(out.join("test/control")).unwrap())
        .count();
    assert_eq!(copied, 2);
}

#[test]
fn env_var_sets_the_data_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    run_ok(
        datscan()
            .env("DATSCAN_DATA_ROOT", root.to_str().unwrap())
            .args(["synth", "--n-control", "2", "--n-pd", "2", "--seed", "3"]),
    );
    assert!(root.join("volumes/manifest.csv").exists());
}

#[test]
fn crossval_report_is_internally_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 3, 3, 53);
    let out = dir.path().join("cv");
    run_ok(datscan().args([
        "crossval",
        "--images",
        images.to_str().unwrap(),
        "--folds",
        "3",
        "--epochs",
        "2",
        "--batch-size",
        "4",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("crossval.json")).unwrap()).unwrap();
    let folds = report["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 3);
    assert_eq!(folds[0]["fold"], 1);

    // The weighted means must be recomputable from the rows themselves.
    let mut weight_sum = 0.0;
    let mut acc_sum = 0.0;
    for fold in folds {
        let w = fold["val_size"].as_f64().unwrap();
        weight_sum += w;
        acc_sum += w * fold["val_accuracy"].as_f64().unwrap();
    }
    let reported = report["weighted_mean"]["val_accuracy"].as_f64().unwrap();
    assert!((reported - acc_sum / weight_sum).abs() < 1e-12);

    assert!(out.join("crossval.csv").exists());
    assert!(out.join("report.txt").exists());
}

#[test]
fn crossval_parallel_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 2, 2, 59);
    let args = |out: &Path, parallel: bool| {
        let mut v = vec![
            "crossval".to_string(),
            "--images".into(),
            images.to_str().unwrap().into(),
            "--folds".into(),
            "2".into(),
            "--epochs".into(),
            "1".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ];
        if parallel {
            v.push("--parallel".into());
        }
        v
    };
    let seq = dir.path().join("seq");
    let par = dir.path().join("par");
    run_ok(datscan().args(args(&seq, false)));
    run_ok(datscan().args(args(&par, true)));
    assert_eq!(
        std::fs::read(seq.join("crossval.json")).unwrap(),
        std::fs::read(par.join("crossval.json")).unwrap()
    );
}

#[test]
fn train_emits_every_artifact_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 3, 3, 61);
    let train_args = |out: &Path| {
        [
            "train",
            "--images",
            images.to_str().unwrap(),
            "--test-fraction",
            "0.34",
            "--epochs",
            "2",
            "--batch-size",
            "4",
            "--seed",
            "13",
            "--out",
        ]
        .into_iter()
        .map(str::to_string)
        .chain([out.to_str().unwrap().to_string()])
        .collect::<Vec<_>>()
    };

    let run1 = dir.path().join("run1");
    run_ok(datscan().args(train_args(&run1)));
    for name in [
        "checkpoint.json",
        "history.json",
        "predictions.csv",
        "metrics.json",
        "roc.csv",
        "pr.csv",
        "roc.png",
        "pr.png",
        "report.txt",
        "split.json",
        "config.toml",
    ] {
        assert!(run1.join(name).exists(), "missing {name}");
    }
    let report = std::fs::read_to_string(run1.join("report.txt")).unwrap();
    for field in ["Test Accuracy", "Test Loss", "Sensitivity", "Specificity"] {
        assert!(report.contains(field));
    }

    // Identical seeds and inputs reproduce the run byte for byte.
    let run2 = dir.path().join("run2");
    run_ok(datscan().args(train_args(&run2)));
    for name in ["predictions.csv", "metrics.json", "checkpoint.json"] {
        assert_eq!(
            std::fs::read(run1.join(name)).unwrap(),
            std::fs::read(run2.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn evaluate_reproduces_train_metrics_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let train_images = make_images(dir.path(), "train", 2, 2, 67);
    let test_images = make_images(dir.path(), "test", 2, 2, 71);
    let run = dir.path().join("run");
    run_ok(datscan().args([
        "train",
        "--train-images",
        train_images.to_str().unwrap(),
        "--test-images",
        test_images.to_str().unwrap(),
        "--epochs",
        "2",
        "--batch-size",
        "4",
        "--seed",
        "19",
        "--out",
        run.to_str().unwrap(),
    ]));

    let eval = dir.path().join("eval");
    run_ok(datscan().args([
        "evaluate",
        "--predictions",
        run.join("predictions.csv").to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(run.join("metrics.json")).unwrap(),
        std::fs::read(eval.join("metrics.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(run.join("roc.csv")).unwrap(),
        std::fs::read(eval.join("roc.csv")).unwrap()
    );
}

#[test]
fn evaluate_recovers_known_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for i in 0..88 {
        records.push(PredictionRecord {
            subject_id: format!("tp-{i:03}"),
            score: 0.9,
            truth: ClassLabel::Pd,
        });
    }
    records.push(PredictionRecord {
        subject_id: "fn-000".into(),
        score: 0.1,
        truth: ClassLabel::Pd,
    });
    for i in 0..42 {
        records.push(PredictionRecord {
            subject_id: format!("tn-{i:03}"),
            score: 0.1,
            truth: ClassLabel::Control,
        });
    }
    records.push(PredictionRecord {
        subject_id: "fp-000".into(),
        score: 0.9,
        truth: ClassLabel::Control,
    });
    let predictions = dir.path().join("predictions.csv");
    write_predictions(&predictions, &records).unwrap();

    let out = dir.path().join("eval");
    run_ok(datscan().args([
        "evaluate",
        "--predictions",
        predictions.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["true_positives"], 88);
    assert_eq!(metrics["true_negatives"], 42);
    assert_eq!(metrics["false_positives"], 1);
    assert_eq!(metrics["false_negatives"], 1);
    for (name, expected) in [
        ("sensitivity", 0.9888),
        ("specificity", 0.9767),
        ("precision", 0.9888),
        ("accuracy", 0.9848),
    ] {
        let got = metrics[name].as_f64().unwrap();
        assert!(
            (got - expected).abs() < 5e-5,
            "{name}: got {got}, expected {expected}"
        );
    }
}

#[test]
fn evaluate_rejects_empty_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "subject_id,score,truth\n").unwrap();
    run_err(
        datscan().args(["evaluate", "--predictions", empty.to_str().unwrap()]),
        2,
    );

    let malformed = dir.path().join("malformed.csv");
    std::fs::write(&malformed, "subject_id,score,truth\ns1,0.9,pd\ns2,oops,control\n").unwrap();
    let output = run_err(
        datscan().args(["evaluate", "--predictions", malformed.to_str().unwrap()]),
        2,
    );
    assert!(stderr_of(&output).contains("line 3"));
}

#[test]
fn report_rerenders_finished_runs() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 2, 2, 73);
    let run = dir.path().join("run");
    run_ok(datscan().args([
        "train",
        "--images",
        images.to_str().unwrap(),
        "--test-fraction",
        "0.5",
        "--epochs",
        "1",
        "--seed",
        "23",
        "--out",
        run.to_str().unwrap(),
    ]));

    let output = run_ok(datscan().args(["report", "--run", run.to_str().unwrap()]));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("Test Accuracy"));

    let empty = dir.path().join("nothing");
    std::fs::create_dir_all(&empty).unwrap();
    run_err(datscan().args(["report", "--run", empty.to_str().unwrap()]), 2);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_images(dir.path(), "data", 2, 2, 79);
    let run1 = dir.path().join("run1");
    run_ok(datscan().args([
        "train",
        "--images",
        images.to_str().unwrap(),
        "--test-fraction",
        "0.5",
        "--epochs",
        "2",
        "--seed",
        "29",
        "--no-augment",
        "--out",
        run1.to_str().unwrap(),
    ]));

    // Feed the echoed config back in; only the dataset and output
    // locations are passed as flags.
    let run2 = dir.path().join("run2");
    run_ok(datscan().args([
        "--config",
        run1.join("config.toml").to_str().unwrap(),
        "train",
        "--images",
        images.to_str().unwrap(),
        "--out",
        run2.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(run1.join("predictions.csv")).unwrap(),
        std::fs::read(run2.join("predictions.csv")).unwrap()
    );
}
