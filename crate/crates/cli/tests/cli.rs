use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mixres(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixres"))
        .args(args)
        .env("MIXRES_OUTPUT_ROOT", root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Desk preset shrunk to a few channels and one epoch per network.
fn tiny_config(root: &Path) -> PathBuf {
    let mut cfg: Value = serde_json::from_str(&ok(&mixres(root, &["show-config"]))).unwrap();
    cfg["name"] = "tiny".into();
    cfg["output_dir"] = "tiny".into();
    cfg["datasets"][0]["num_samples"] = 3.into();
    cfg["datasets"][1]["num_samples"] = 3.into();
    cfg["split"]["cgan_train_per_dataset"] = 2.into();
    cfg["cgan"]["epochs"] = 1.into();
    cfg["cgan"]["batch_size"] = 2.into();
    cfg["lstm"]["epochs"] = 1.into();
    let path = root.join("tiny.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn stages_run_in_order_and_reports_are_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny_config(root.path());
    let cfg = cfg.to_str().unwrap();
    let run = root.path().join("tiny");

    // Later stages refuse to run before their inputs exist.
    assert_eq!(mixres(root.path(), &["--config", cfg, "train-cgan"]).status.code(), Some(2));

    ok(&mixres(root.path(), &["--config", cfg, "gen-data"]));
    assert!(run.join("dataset.json").exists());
    assert_eq!(mixres(root.path(), &["--config", cfg, "train-lstm"]).status.code(), Some(2));

    let log = ok(&mixres(root.path(), &["--config", cfg, "train-cgan"]));
    assert!(log.contains("epoch    1"), "{log}");
    let history = std::fs::read_to_string(run.join("cgan_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(history.starts_with("epoch,loss_D,loss_G,l2_term,val_nse,val_l2"));

    ok(&mixres(root.path(), &["--config", cfg, "train-lstm"]));
    assert!(run.join("lstm.ckpt").exists());

    ok(&mixres(root.path(), &["--config", cfg, "run-esprit"]));
    let est = std::fs::read_to_string(run.join("esprit_estimates.csv")).unwrap();
    assert!(est.starts_with("sample_id,i,theta,tau,alpha_re,alpha_im,residual"));

    let summary = ok(&mixres(root.path(), &["--config", cfg, "evaluate"]));
    for m in ["measurement", "cgan", "cgan_lstm"] {
        assert!(summary.contains(m), "{summary}");
    }
    let report = run.join("report");
    let files = ["nse_per_sample.csv", "summary.json", "cdf_cgan.csv", "cdf_cgan_lstm.csv", "cdf_measurement.csv"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(report.join(f)).unwrap()).collect();
    ok(&mixres(root.path(), &["--config", cfg, "evaluate"]));
    let second: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(report.join(f)).unwrap()).collect();
    assert_eq!(first, second);

    let table = ok(&mixres(root.path(), &["--config", cfg, "report"]));
    assert_eq!(table, summary);
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(mixres(root.path(), &["--preset", "huge", "gen-data"]).status.code(), Some(2));
    let bad = root.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": 3}").unwrap();
    let out = mixres(root.path(), &["--config", bad.to_str().unwrap(), "gen-data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
    assert_eq!(mixres(root.path(), &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn presets_print_as_valid_json() {
    let root = tempfile::tempdir().unwrap();
    for preset in ["desk", "full"] {
        let cfg: Value = serde_json::from_str(&ok(&mixres(root.path(), &["--preset", preset, "show-config"]))).unwrap();
        assert_eq!(cfg["name"], preset);
    }
}
