use std::path::Path;

use clap::Parser;
use failgen::cli::{self, Cli, EXIT_CONFIG, EXIT_STAGE};
use failgen::perception::{FailureDefinition, SurrogateParams};

const SMALL: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pipeline_small.json");

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["failgen"];
    argv.extend_from_slice(args);
    cli::run(Cli::parse_from(argv))
}

fn stage(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![cmd, "--config", config, "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn validate_map_accepts_bundled_maps() {
    for m in ["garage_small", "garage_medium"] {
        let path = format!("{}/maps/{m}.json", env!("CARGO_MANIFEST_DIR"));
        assert_eq!(run(&["validate-map", &path]), 0);
    }
}

#[test]
fn validate_map_rejects_broken_map() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"nodes":[{"id":0,"x":0,"y":0}],
            "lanes":[{"id":0,"from":0,"to":5,"length":1,"speed":1}],
            "decision_points":[],"spawn_points":[],"exit_points":[],"av_route":[0]}"#,
    )
    .unwrap();
    assert_eq!(run(&["validate-map", path.to_str().unwrap()]), EXIT_CONFIG);
    assert_eq!(run(&["validate-map", "/no/such/map.json"]), EXIT_CONFIG);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        stage("simulate", "/no/such/config.json", dir.path(), &[]),
        EXIT_CONFIG
    );
    assert_eq!(
        stage("simulate", SMALL, dir.path(), &["--definition", "e"]),
        EXIT_CONFIG
    );
    assert_eq!(
        stage("train", SMALL, dir.path(), &["--epochs", "0"]),
        EXIT_CONFIG
    );
}

#[test]
fn stage_failure_leaves_marker() {
    let dir = tempfile::tempdir().unwrap();
    // No episodes or datasets exist yet.
    assert_eq!(stage("train", SMALL, dir.path(), &[]), EXIT_STAGE);
    let marker = std::fs::read_to_string(dir.path().join("FAILED")).unwrap();
    let record: serde_json::Value = serde_json::from_str(&marker).unwrap();
    assert_eq!(record["error"]["stage"], "train");
    assert!(!dir.path().join("manifest.json").exists());

    // A later successful run clears it.
    assert_eq!(stage("simulate", SMALL, dir.path(), &[]), 0);
    assert!(!dir.path().join("FAILED").exists());
}

#[test]
fn single_stages_reproduce_the_pipeline() {
    let whole = tempfile::tempdir().unwrap();
    assert_eq!(stage("pipeline", SMALL, whole.path(), &[]), 0);

    let split = tempfile::tempdir().unwrap();
    for cmd in [
        "simulate", "extract", "train", "gen-env", "evaluate", "report",
    ] {
        assert_eq!(stage(cmd, SMALL, split.path(), &[]), 0, "{cmd}");
    }
    let manifest = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(manifest(whole.path()), manifest(split.path()));

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(whole.path().join("reports/eval.json")).unwrap(),
    )
    .unwrap();
    for env in report["environments"].as_array().unwrap() {
        let labels: Vec<&str> = env["definitions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d["definition"].as_str().unwrap())
            .collect();
        assert_eq!(labels, ["a", "b", "c", "d"]);
    }
    assert_eq!(
        FailureDefinition::from_label("c").unwrap(),
        FailureDefinition::TeMaxAbove { theta: 1.0 }
    );
}

#[test]
fn bundled_surrogate_profile_is_the_builtin_one() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/configs/surrogate_default.json"
    );
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(
        SurrogateParams::from_json(&text).unwrap(),
        SurrogateParams::default_garage()
    );
}
