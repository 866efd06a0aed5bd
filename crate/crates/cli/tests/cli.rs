use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dbforge_core::orchestration::{MemoryPool, TrajectoryRecord};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn dbforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbforge"))
        .args(["--profiles-dir", root().join("profiles").to_str().unwrap()])
        .args(args)
        .env("LLM_BASE_URL", "http://127.0.0.1:9/v1")
        .env_remove("LLM_API_KEY")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn malformed_spec_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    std::fs::write(&spec, "name = \"\"\narg_types = 3\n").unwrap();
    let o = dbforge(&["run", spec.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_profile_exits_with_two() {
    let spec = root().join("fixtures/specs/toy_even.toml");
    let o = dbforge(&["--profile", "nope", "validate", spec.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn empty_suite_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("empty.toml");
    std::fs::write(&suite, "functions = []\n").unwrap();
    let o = dbforge(&[
        "--out",
        dir.path().to_str().unwrap(),
        "eval",
        suite.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn replay_without_a_transcript_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = root().join("fixtures/specs/toy_even.toml");
    let o = dbforge(&[
        "--out",
        dir.path().to_str().unwrap(),
        "--transcript",
        dir.path().join("none.jsonl").to_str().unwrap(),
        "run",
        spec.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn record_mode_needs_an_api_key() {
    let dir = tempfile::tempdir().unwrap();
    let spec = root().join("fixtures/specs/toy_even.toml");
    let o = dbforge(&[
        "--out",
        dir.path().to_str().unwrap(),
        "--llm-mode",
        "record",
        "run",
        spec.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn memory_stats_prints_one_line_per_category() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("memory_pool.json");
    MemoryPool::update_file(&pool, 16, |p| {
        for (i, n) in [4, 2, 7].into_iter().enumerate() {
            p.insert_trajectory(TrajectoryRecord::synthetic(&format!("f{i}"), "math", n));
        }
    })
    .unwrap();
    let o = dbforge(&["--memory-pool", pool.to_str().unwrap(), "memory", "stats"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        String::from_utf8_lossy(&o.stdout),
        "math: min=2 median=4 max=7 count=3\n"
    );

    let o = dbforge(&[
        "--memory-pool",
        pool.to_str().unwrap(),
        "memory",
        "inspect",
        "--category",
        "math",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["math"].as_array().unwrap().len(), 3);
}

#[test]
fn characterize_writes_its_document() {
    let dir = tempfile::tempdir().unwrap();
    let o = dbforge(&[
        "--repo",
        root().join("fixtures/toydb").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "characterize",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("characterization.json")).unwrap(),
    )
    .unwrap();
    assert!(!doc["declarations"].as_array().unwrap().is_empty());
}

#[test]
fn bad_flag_values_are_usage_errors() {
    assert_eq!(code(&dbforge(&["--decay", "2.0", "memory", "stats"])), 2);
    assert_eq!(code(&dbforge(&["frobnicate"])), 2);
}
