//! End-to-end runs of the `egolog` binary on a tiny workspace.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3
[corpus]
scenario_train = 8
scenario_test = 4
drift_pool = 8
drift_val = 4
drift_test = 4
har_train_per_class = 1
har_test_per_class = 1
spatial_static_train = 4
spatial_moving_train = 4
spatial_static_test_pairs = 1
spatial_moving_test = 2
[temporal]
contrastive_epochs = 1
aggregator_epochs = 2
[har]
epochs = 1
[llm]
mode = "oracle"
[llm.fine_tune]
min_records = 1
epochs = 2
[daily_log]
segments = 2
segment_minutes = 1.0
horizon_minutes = 1.0
step_minutes = 0.5
"#;

fn egolog(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egolog"))
        .arg("--workspace")
        .arg(root)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = egolog(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn missing_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = egolog(dir.path(), &["train", "har"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: "), "{err}");

    let out = egolog(dir.path(), &["--config", "nope.toml", "generate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_the_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        std::fs::write(d.path().join("egolog.toml"), TINY).unwrap();
    }
    ok(a.path(), &["generate"]);
    ok(b.path(), &["--seed", "4", "generate"]);
    let manifest = |d: &Path| std::fs::read(d.join("corpus/manifest.json")).unwrap();
    assert_ne!(manifest(a.path()), manifest(b.path()));
    ok(b.path(), &["--seed", "3", "generate"]);
    assert_eq!(manifest(a.path()), manifest(b.path()));
}

#[test]
fn collab_daily_log_and_ablation_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("tiny.toml"), TINY).unwrap();
    let cfg = ["--config", "tiny.toml"];
    let run = |args: &[&str]| ok(root, &[&cfg[..], args].concat());
    run(&["generate"]);
    for t in ["temporal", "scenario", "har"] {
        run(&["train", t]);
    }

    let collab: serde_json::Value = serde_json::from_str(&run(&["collab-run"])).unwrap();
    assert_eq!(collab["sequences"], 8);
    assert!(root.join("reports/collab.json").exists());
    assert!(root.join("models/scenario-collab.ckpt").exists());
    let lines = std::fs::read_to_string(root.join("reports/pseudo_labels.ndjson")).unwrap();
    assert_eq!(lines.lines().count() as u64, collab["queries"].as_u64().unwrap());

    run(&["daily-log"]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("reports/daily_log.json")).unwrap()).unwrap();
    // Two 1-minute segments, 5 s windows every 2.5 s.
    assert_eq!(report["windows"], 2 * 23);
    for bucket in report["scenario_row"].as_array().unwrap() {
        let total: f64 = bucket["probabilities"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    assert!(std::fs::read_to_string(root.join("reports/daily_log.svg")).unwrap().starts_with("<svg"));

    let csv = run(&["ablate", "activity"]);
    assert!(csv.starts_with("suite,row,metric,value"), "{csv}");
    for row in ["random", "unimodal-audio", "unimodal-imu", "multimodal", "+scenario"] {
        assert!(csv.contains(&format!("activity,{row},accuracy,")), "{row} missing: {csv}");
    }
    assert!(root.join("reports/ablation-activity.svg").exists());
}
