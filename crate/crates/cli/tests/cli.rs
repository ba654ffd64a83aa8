//! Runs the compiled binary against temporary directories.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cybertom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cybertom"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .env_remove("CYBERTOM_OUTPUT_DIR")
        .env_remove("CYBERTOM_JOBS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn network_files_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = cybertom(dir.path(), &["network", "--topology", "tree40", "--seed", "7"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("40 nodes"));
    }
    let read = |d: &Path| fs::read(d.join("tree40_seed7.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn bad_ids_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = cybertom(dir.path(), &["network", "--topology", "tree41", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tree30"), "{}", stderr(&o));

    let o = cybertom(
        dir.path(),
        &["simulate", "-b", "blue.nobody", "-r", "red.random_simple", "-t", "tree30", "-n", "1", "-s", "1"],
    );
    assert_eq!(o.status.code(), Some(2));

    let o = cybertom(dir.path(), &["tournament"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn isolate_always_wins_a_single_entry_game() {
    let dir = tempfile::tempdir().unwrap();
    let o = cybertom(
        dir.path(),
        &["simulate", "-b", "blue.isolate", "-r", "red.hvt_pref_sp", "-t", "tree30", "-n", "5", "-s", "3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["win_rate"], 1.0);
    assert_eq!(fs::read_dir(dir.path().join("episodes")).unwrap().count(), 5);
}

#[test]
fn zero_episodes_report_null_means() {
    let dir = tempfile::tempdir().unwrap();
    let o = cybertom(
        dir.path(),
        &["simulate", "-b", "blue.sleep", "-r", "red.random_simple", "-t", "tree30", "-n", "0", "-s", "3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["episodes"], 0);
    assert!(summary["win_rate"].is_null());
}

#[test]
fn ntd_reports_the_diameter_bound() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("path.json"),
        r#"{"nodes":3,"edges":[[0,1],[1,2]],"layers":["core","edge","edge"],"entry":0}"#,
    )
    .unwrap();
    let net = dir.path().join("path.json");
    let o = cybertom(dir.path(), &["ntd", "score", "--network", net.to_str().unwrap(), "--p", "0=1", "--q", "2=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ntd"], 1.0);
    assert_eq!(v["diameter"], 2);

    let o = cybertom(dir.path(), &["ntd", "score", "--network", net.to_str().unwrap(), "--p", "0=1", "--q", "7=1"]);
    assert_eq!(o.status.code(), Some(2));
}

fn build_small_dataset(dir: &Path) {
    let o = cybertom(
        dir,
        &["dataset", "--seed", "5", "--red-agents", "6", "--holdout-agents", "1", "--max-steps", "200"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("past pools disjoint: ok"));
}

#[test]
fn dataset_and_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    build_small_dataset(dir.path());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let samples = manifest["samples"].as_array().unwrap();
    assert!(!samples.is_empty());

    // perfect predictions straight from the ground truth
    let mut lines = String::new();
    for s in samples {
        let truth = s["truth_hvn"].as_u64().unwrap();
        let pred_hvn: Vec<f64> = s["hvn_candidates"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| if c.as_u64() == Some(truth) { 1.0 } else { 0.0 })
            .collect();
        let record = serde_json::json!({"sample_id": s["sample_id"], "pred_hvn": pred_hvn, "pred_sr": s["truth_sr"]});
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    let preds = dir.path().join("preds.jsonl");
    fs::write(&preds, lines).unwrap();
    let scores = dir.path().join("scores");
    let o = cybertom(
        &scores,
        &["score", "-p", preds.to_str().unwrap(), "-m", dir.path().join("manifest.json").to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let hvt: serde_json::Value = serde_json::from_slice(&fs::read(scores.join("hvt_score.json")).unwrap()).unwrap();
    assert_eq!(hvt["weighted_f1"], 1.0);
    for file in ["confusion_counts.csv", "confusion_normalised.csv", "ntd_samples.csv", "ntd_strata.csv", "hedging.json", "weighting_gap.json"] {
        assert!(scores.join(file).exists(), "missing {file}");
    }
    let strata = fs::read_to_string(scores.join("ntd_strata.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(strata.as_bytes());
    let headers = rows.headers().unwrap().clone();
    let mean = headers.iter().position(|h| h == "mean").unwrap();
    for row in rows.records() {
        assert_eq!(row.unwrap()[mean].parse::<f64>().unwrap(), 0.0);
    }

    // an id the manifest does not know is a data error
    fs::write(&preds, "{\"sample_id\":\"nope\",\"pred_hvn\":[1,0,0]}\n").unwrap();
    let o = cybertom(
        &scores,
        &["score", "-p", preds.to_str().unwrap(), "-m", dir.path().join("manifest.json").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "schema_version = 1\n[dataset]\nsubsample = -3\n").unwrap();
    let o = cybertom(dir.path(), &["dataset", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dataset.subsample"), "{}", stderr(&o));
}
