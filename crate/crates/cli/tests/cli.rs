use std::path::Path;
use std::process::Command as Proc;

use carenet_cli::{desk_config, run, Command, Options, RunConfig};

fn tiny() -> RunConfig {
    RunConfig::from_json(
        r#"{
            "fingerprint_channels": 40,
            "raw_range": [1950.0, 850.0],
            "n_samples": 12,
            "n_classes": 3,
            "tissue_fraction": 0.75,
            "spectral_path": [4],
            "spatial_path": [4],
            "fusion_dense": 8,
            "epochs": 2,
            "folds": 2,
            "top_n": 5
        }"#,
    )
    .unwrap()
}

fn write_config(dir: &Path, cfg: &RunConfig) -> std::path::PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn opts(config: &Path, out: &Path) -> Options {
    Options {
        config: Some(config.to_path_buf()),
        seed: Some(3),
        out: out.to_path_buf(),
        workers: None,
        task: None,
    }
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn empty_config_takes_defaults() {
    let cfg = RunConfig::from_json("{}").unwrap();
    assert_eq!(cfg.savgol_window, 11);
    assert_eq!(cfg.savgol_order, 2);
    assert_eq!(cfg.batch_size, 10);
    assert_eq!(cfg.folds, 4);
    assert_eq!(cfg.top_n, 30);
    assert_eq!(cfg.task, "subtype");
}

#[test]
fn invalid_values_and_unknown_keys_are_rejected() {
    let e = RunConfig::from_json(r#"{"savgol_window": 4}"#)
        .unwrap_err()
        .to_string();
    assert!(e.contains("preprocess"), "{e}");
    let e = RunConfig::from_json(r#"{"savgol_windw": 11}"#)
        .unwrap_err()
        .to_string();
    assert!(e.contains("savgol_windw"), "{e}");
    assert!(RunConfig::from_json(r#"{"task": "grade"}"#).is_err());
    assert!(RunConfig::from_json(r#"{"workers": 0}"#).is_err());
    assert!(RunConfig::from_json(r#"{"raw_dir": "/nonexistent/raw"}"#).is_err());
}

#[test]
fn config_round_trips() {
    for cfg in [RunConfig::default(), desk_config(), tiny()] {
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), text);
    }
}

#[test]
fn shipped_desk_config_matches_builder() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    assert_eq!(RunConfig::load(&path).unwrap(), desk_config());
}

#[test]
fn seed_precedence() {
    let mut cfg = RunConfig::default();
    assert_eq!(cfg.resolve_seed(None, None).unwrap(), 0);
    assert_eq!(cfg.resolve_seed(None, Some("11")).unwrap(), 11);
    assert!(cfg.resolve_seed(None, Some("eleven")).is_err());
    cfg.seed = Some(5);
    assert_eq!(cfg.resolve_seed(None, Some("11")).unwrap(), 5);
    assert_eq!(cfg.resolve_seed(Some(9), Some("11")).unwrap(), 9);
}

#[test]
fn unknown_subcommand_prints_usage() {
    let out = Proc::new(env!("CARGO_BIN_EXE_carenet"))
        .arg("fit")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn bad_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"savgol_window": 4}"#).unwrap();
    let out = Proc::new(env!("CARGO_BIN_EXE_carenet"))
        .args(["synth", "--config"])
        .arg(&p)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("savgol"));
}

#[test]
fn pipeline_is_reproducible_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &tiny());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let sa = run(Command::Pipeline, &opts(&cfg_path, &a)).unwrap();
    let sb = run(Command::Pipeline, &opts(&cfg_path, &b)).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(sa.seed, 3);
    assert!(sa.voted_accuracy.is_some());
    assert!(sa.top_band.is_some());
    assert_eq!(manifest(&a)["artifacts"], manifest(&b)["artifacts"]);

    for rel in [
        "config.json",
        "raw/labels.csv",
        "raw/library.json",
        "preprocessed/report.json",
        "train/subtype/folds.csv",
        "train/subtype/split.json",
        "train/subtype/fold0/model.bin",
        "train/subtype/fold1/history.csv",
        "predict/subtype/predictions.csv",
        "explain/subtype/importance.csv",
        "explain/subtype/bands.csv",
        "explain/subtype/path_contribution.csv",
        "explain/subtype/summary.json",
        "evaluate/subtype/metrics.csv",
        "evaluate/subtype/votes.csv",
        "evaluate/subtype/summary.json",
    ] {
        assert!(a.join(rel).exists(), "missing {rel}");
    }
    let heatmaps = std::fs::read_dir(a.join("explain/subtype/heatmaps"))
        .unwrap()
        .count();
    assert!(heatmaps > 0);

    let m = manifest(&a);
    assert_eq!(m["command"], "pipeline");
    assert_eq!(m["seeds"]["folds"], serde_json::json!([3, 4]));
    let listed: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["path"].as_str().unwrap())
        .collect();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(listed, sorted);
    assert!(!listed.contains(&"manifest.json"));
    let echoed = RunConfig::load(&a.join("config.json")).unwrap();
    assert_eq!(echoed.seed, Some(3));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        epochs: 1,
        ..tiny()
    };
    let cfg_path = write_config(dir.path(), &cfg);
    let mut runs = Vec::new();
    for w in [1, 4] {
        let out = dir.path().join(format!("w{w}"));
        run(
            Command::Pipeline,
            &Options {
                workers: Some(w),
                ..opts(&cfg_path, &out)
            },
        )
        .unwrap();
        runs.push(manifest(&out)["artifacts"].clone());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn stages_run_separately_and_ki67_trains() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        epochs: 1,
        ..tiny()
    };
    let cfg_path = write_config(dir.path(), &cfg);
    let out = dir.path().join("o");
    let o = opts(&cfg_path, &out);
    run(Command::Synth, &o).unwrap();
    assert_eq!(manifest(&out)["command"], "synth");
    run(Command::Preprocess, &o).unwrap();
    assert_eq!(manifest(&out)["command"], "preprocess");
    let ki67 = Options {
        task: Some("ki67".into()),
        ..o.clone()
    };
    run(Command::Train, &ki67).unwrap();
    let m = manifest(&out);
    assert!(m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["path"] == "train/ki67/fold0/model.bin"));
    let history = std::fs::read_to_string(out.join("train/ki67/fold1/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(history.starts_with("epoch,train_loss,dev_metric,dev_loss,best_dev_metric,lr"));

    assert!(
        run(Command::Evaluate, &ki67).is_err(),
        "evaluate needs predictions first"
    );
    run(Command::Predict, &ki67).unwrap();
    let s = run(Command::Evaluate, &ki67).unwrap();
    assert!(s.voted_accuracy.is_none());
    let reg = std::fs::read_to_string(out.join("evaluate/ki67/regression.csv")).unwrap();
    assert!(reg.starts_with("scale,fold,mae,mse,rmse"));
}

#[test]
fn train_without_preprocess_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &tiny());
    let out = dir.path().join("o");
    let e = run(Command::Train, &opts(&cfg_path, &out))
        .unwrap_err()
        .to_string();
    assert!(e.starts_with("train"), "{e}");
}
