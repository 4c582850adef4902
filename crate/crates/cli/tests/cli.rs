//! End-to-end behaviour of the `rolecast` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fixture")
}

fn rolecast(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rolecast"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn rolecast")
}

fn fixture_args<'a>(conf: &'a str, args: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--config", conf];
    v.extend_from_slice(args);
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(path: &Path) -> usize {
    let text = fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn ingest_valid_corpus_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let conf = fixture().join("pipeline.conf");
    let o = rolecast(
        dir.path(),
        &fixture_args(conf.to_str().unwrap(), &["ingest"]),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ingest/summary.json")).unwrap())
            .unwrap();
    assert!(v["data"]["accounts_retained"].as_u64().unwrap() > 100);
    assert!(v["seed"].is_u64() && v["config_hash"].is_string());
}

#[test]
fn ingest_missing_corpus_fails_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = rolecast(
        dir.path(),
        &["--set", "corpus=/nonexistent/posts.jsonl", "ingest"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("/nonexistent/posts.jsonl"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn ingest_empty_corpus_reports_zero_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty.jsonl");
    fs::write(&corpus, "").unwrap();
    let registry = fixture().join("registry.tsv");
    let o = rolecast(
        &dir.path().join("out"),
        &[
            "--set",
            &format!("corpus={}", corpus.display()),
            "--set",
            &format!("registry={}", registry.display()),
            "ingest",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/ingest/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v["data"]["load"]["loaded"], 0);
    assert_eq!(v["data"]["accounts_retained"], 0);
}

#[test]
fn featurize_rows_match_retained_accounts_and_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let conf = fixture().join("pipeline.conf");
    let conf = conf.to_str().unwrap();
    assert!(rolecast(dir.path(), &fixture_args(conf, &["ingest"]))
        .status
        .success());
    let o = rolecast(dir.path(), &fixture_args(conf, &["featurize"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let accounts = fs::read_to_string(dir.path().join("ingest/accounts.csv")).unwrap();
    let retained = accounts.lines().filter(|l| l.ends_with(",1")).count();
    let first = fs::read(dir.path().join("features/window_0.csv")).unwrap();
    assert_eq!(
        data_rows(&dir.path().join("features/window_0.csv")),
        retained
    );
    assert!(rolecast(dir.path(), &fixture_args(conf, &["featurize"]))
        .status
        .success());
    assert_eq!(
        fs::read(dir.path().join("features/window_0.csv")).unwrap(),
        first
    );
}

#[test]
fn featurize_missing_pattern_file_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let conf = fixture().join("pipeline.conf");
    let conf = conf.to_str().unwrap();
    assert!(rolecast(dir.path(), &fixture_args(conf, &["ingest"]))
        .status
        .success());
    let o = rolecast(
        dir.path(),
        &fixture_args(
            conf,
            &["--set", "patterns=/nonexistent/patterns.txt", "featurize"],
        ),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("/nonexistent/patterns.txt"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn dynamics_without_assignments_names_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = rolecast(dir.path(), &["dynamics"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(
        e.contains("roles/") && e.contains("missing upstream artifact"),
        "{e}"
    );
}

#[test]
fn simulate_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = rolecast(
            d.path(),
            &["--seed", "5", "--set", "sim_bins=5000", "simulate"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("simulate/series.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn simulate_null_process_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let o = rolecast(
        dir.path(),
        &[
            "--set",
            "sim_background=0,0,0",
            "--set",
            "sim_weights=0,0,0;0,0,0;0,0,0",
            "--set",
            "sim_bins=1000",
            "simulate",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("simulate/series.json")).unwrap())
            .unwrap();
    assert_eq!(v["data"]["series"]["events"].as_array().unwrap().len(), 0);
}

#[test]
fn simulate_explosive_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = rolecast(
        dir.path(),
        &[
            "--set",
            "sim_weights=0.9,0.5,0;0.5,0.9,0;0,0,0.9",
            "simulate",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn simulated_series_fits_back() {
    let dir = tempfile::tempdir().unwrap();
    let sets = [
        "--set",
        "sim_bins=20000",
        "--set",
        "lag_horizon=20",
        "--seed",
        "3",
    ];
    let mut args = sets.to_vec();
    args.push("simulate");
    assert!(rolecast(dir.path(), &args).status.success());
    let series = dir.path().join("simulate/series.json");
    let series = series.to_str().unwrap();
    let mut args = sets.to_vec();
    args.extend(["hawkes", "--series", series]);
    let o = rolecast(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("hawkes/series_fit.json")).unwrap(),
    )
    .unwrap();
    let fit = &v["data"]["fit"];
    assert_eq!(fit["converged"], true);
    assert_eq!(fit["params"]["weights"].as_array().unwrap().len(), 3);
}

#[test]
fn later_stage_warns_on_config_change_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = fixture().join("pipeline.conf");
    let conf = conf.to_str().unwrap();
    assert!(rolecast(dir.path(), &fixture_args(conf, &["ingest"]))
        .status
        .success());
    let o = rolecast(
        dir.path(),
        &fixture_args(conf, &["--seed", "9", "featurize"]),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stderr(&o).contains("was written with seed=0"),
        "{}",
        stderr(&o)
    );
}
