//! End-to-end checks of the command-line surface: exit codes, output
//! files, and the config-echo contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lkp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lkp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn find_one(dir: &Path, prefix: &str, suffix: &str) -> std::path::PathBuf {
    let mut hits: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            name.starts_with(prefix) && name.ends_with(suffix)
        })
        .collect();
    assert_eq!(hits.len(), 1, "expected one {prefix}*{suffix} in {dir:?}");
    hits.pop().unwrap()
}

#[test]
fn help_exits_zero() {
    let out = lkp(&["--help"]);
    assert!(out.status.success());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = lkp(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lkp(&["evaluate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--data"), "{}", stderr(&out));
    // The effective config is echoed even for runs that then fail.
    assert!(dir.path().join("config-echo.json").exists());
}

#[test]
fn nps_constraint_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = lkp(&[
        "synth",
        "--synth-users", "150", "--synth-items", "400", "--synth-categories", "8",
        "--seed", "3", "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dataset = find_one(dir.path(), "synth-", ".json");
    let out = lkp(&[
        "train",
        "--data", dataset.to_str().unwrap(),
        "--objective", "lkp_nps",
        "--k", "5", "--n", "4",
        "--out", out_dir,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("n == k"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, br#"{"epochs": 3, "not_a_key": true}"#).unwrap();
    let out = lkp(&[
        "verify",
        "--config", config.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("not_a_key"), "{}", stderr(&out));
}

#[test]
fn missing_dataset_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lkp(&[
        "train",
        "--data", "/nonexistent/dataset.json",
        "--kernel-mode", "gaussian",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn verify_passes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let out = lkp(&["verify", "--seed", "11", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(start.elapsed().as_secs() < 60);
    let text = stdout(&out);
    assert!(text.contains("normalizer oracle"));
    assert!(text.contains("all checks passed"));
}

#[test]
fn pipeline_produces_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();

    let out = lkp(&[
        "synth",
        "--synth-users", "150", "--synth-items", "400", "--synth-categories", "8",
        "--seed", "3", "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dataset = find_one(dir.path(), "synth-", ".json");

    // The effective config is echoed before any work.
    let echo = dir.path().join("config-echo.json");
    assert!(echo.exists());
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&echo).unwrap()).unwrap();
    assert_eq!(parsed["seed"], 3);

    let out = lkp(&[
        "train-kernel",
        "--data", dataset.to_str().unwrap(),
        "--rank", "16", "--set-size", "4", "--kernel-epochs", "1",
        "--seed", "3", "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let kernel = find_one(dir.path(), "train-kernel-", ".bin");

    let out = lkp(&[
        "train",
        "--data", dataset.to_str().unwrap(),
        "--kernel", kernel.to_str().unwrap(),
        "--objective", "lkp_nps", "--sampler", "s",
        "--k", "4", "--n", "4",
        "--epochs", "2", "--embedding-dim", "8",
        "--seed", "3", "--threads", "2", "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log_path = dir
        .path()
        .read_dir()
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            name.starts_with("train-") && name.ends_with(".json") && !name.contains("kernel")
        })
        .expect("training log exists");
    // JSON-lines log: one record per epoch with the contract fields.
    let log = fs::read_to_string(&log_path).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2);
    let record: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(record["epoch"], 1);
    assert!(record["loss"].is_f64());
    assert!(record.get("val_ndcg5").is_some());
    assert!(record["wall_ms"].is_u64());

    let model = dir
        .path()
        .read_dir()
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            name.starts_with("train-") && name.ends_with(".bin") && !name.contains("kernel")
        })
        .expect("model checkpoint exists");

    let before = fs::read(&model).unwrap();
    let out = lkp(&[
        "evaluate",
        "--data", dataset.to_str().unwrap(),
        "--model", model.to_str().unwrap(),
        "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(before, fs::read(&model).unwrap(), "evaluate mutated the checkpoint");
    let report = find_one(dir.path(), "evaluate-", ".json");
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["cutoffs"].as_array().unwrap().len(), 3);

    let out = lkp(&[
        "trend",
        "--data", dataset.to_str().unwrap(),
        "--kernel", kernel.to_str().unwrap(),
        "--objective", "lkp_ps", "--k", "4", "--n", "4",
        "--embedding-dim", "8",
        "--trend-epochs", "0,1", "--trend-instances", "20",
        "--seed", "3", "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let trend = find_one(dir.path(), "trend-", ".csv");
    let csv = fs::read_to_string(&trend).unwrap();
    assert!(csv.starts_with("epoch,target_count,mean_prob\n"));
    // Two epochs x groups 0..=4.
    assert_eq!(csv.lines().count(), 1 + 2 * 5);

    let out = lkp(&[
        "sweep",
        "--data", dataset.to_str().unwrap(),
        "--kernel", kernel.to_str().unwrap(),
        "--objective", "lkp_ps",
        "--param", "k", "--values", "2,3",
        "--epochs", "1", "--embedding-dim", "8",
        "--seed", "3", "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let sweep = find_one(dir.path(), "sweep-", ".csv");
    let csv = fs::read_to_string(&sweep).unwrap();
    assert!(csv.starts_with("param,value,best_epoch,metric,cutoff,score\n"));
    // Two k values x three cutoffs x four metrics.
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 4);
}

#[test]
fn ingest_command_round_trips_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let mut body = String::from("user_id,item_id,rating,timestamp\n");
    for u in 0..12 {
        for i in 0..12 {
            body.push_str(&format!("u{u},i{i},5,{}\n", 100 + i));
        }
    }
    fs::write(&ratings, body).unwrap();
    let categories = dir.path().join("categories.csv");
    let mut body = String::new();
    for i in 0..12 {
        body.push_str(&format!("i{i},genre{}\n", i % 4));
    }
    fs::write(&categories, body).unwrap();

    let out = lkp(&[
        "ingest",
        "--ratings", ratings.to_str().unwrap(),
        "--categories", categories.to_str().unwrap(),
        "--threshold", "5",
        "--seed", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("12 users, 12 items, 4 categories"));
    find_one(dir.path(), "ingest-", ".json");
}
