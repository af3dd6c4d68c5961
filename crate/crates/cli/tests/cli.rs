use std::path::Path;
use std::process::{Command, Output};

fn atsd(args: &[&str]) -> Output {
    atsd_env(args, None)
}

fn atsd_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_atsd"));
    cmd.args(args).env_remove("ATSD_SEED");
    if let Some(s) = seed {
        cmd.env("ATSD_SEED", s);
    }
    cmd.output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_is_repeatable_and_reports_targets() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    let first = atsd(&["generate", "population1", "--seed", "17", "--out", path(&a)]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(atsd(&["generate", "population1", "--seed", "17", "--out", path(&b)]).status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let report = stdout(&first);
    assert!(report.contains("corr(x,y)") && (report.contains("pass") || report.contains("FAIL")));
    assert!(report.contains("seed = 17"));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    let env_only = atsd_env(&["generate", "population2", "--out", path(&a)], Some("5"));
    assert!(stdout(&env_only).contains("seed = 5"));
    let flag_wins = atsd_env(&["generate", "population2", "--seed", "6", "--out", path(&b)], Some("5"));
    assert!(stdout(&flag_wins).contains("seed = 6"));
    let bad = atsd_env(&["generate", "population2", "--out", path(&b)], Some("five"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_2_without_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("pop.txt");
    let out = atsd(&["generate", "population1", "--out", path(&target)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    std::fs::write(&cfg, "[population]\npreset = population1\n[scenario]\naux = x\ncolour = red\n").unwrap();
    assert_eq!(atsd(&["cost-plan", path(&cfg)]).status.code(), Some(2));
    assert_eq!(atsd(&["cost-plan", "no-such-preset"]).status.code(), Some(2));
    assert_eq!(atsd(&["verify", "--suite", "nonsense"]).status.code(), Some(2));
}

#[test]
fn verify_suites_pass() {
    let out = atsd(&["verify", "--suite", "murthy"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("E(t) equals the frame total"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn cost_plan_prints_every_design() {
    let out = atsd(&["cost-plan", "table2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for design in ["atsd", "ats", "two_stage", "srs", "two_stage_double"] {
        assert!(text.contains(design), "{design} missing:\n{text}");
    }
    let json = atsd(&["cost-plan", "table4", "--json"]);
    let plan: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(plan["atsd"]["condition"], "y|z");
}

#[test]
fn run_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = atsd(&["run", "table4", "--replicates", "60", "--keep-replicates", "--out-dir", path(&first)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(first.join("table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.lines().next().unwrap().starts_with("estimator,"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["replicates"], 60);
    assert_eq!(manifest["master_seed"], 20130603);
    assert!(manifest["plan"]["srs_n"].as_u64().unwrap() > 0);

    // re-running the emitted config reproduces every tracked output
    let again = dir.path().join("again");
    let cfg = first.join("config.ini");
    let rerun = atsd(&["run", path(&cfg), "--keep-replicates", "--out-dir", path(&again)]);
    assert_eq!(rerun.status.code(), Some(0));
    for entry in manifest["outputs"].as_array().unwrap() {
        let name = entry["path"].as_str().unwrap();
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn env_seed_overrides_run_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = atsd_env(&["run", "table4", "--replicates", "5", "--out-dir", path(&out_dir)], Some("123"));
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 123);
}

#[test]
fn population_replication_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = atsd(&["run", "table2", "--replicates", "20", "--populations", "2", "--out-dir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("estimator,populations,eff_mean"));
    assert!(summary.contains("RegO_x,2,"));
    assert!(dir.path().join("population_1").join("table.csv").exists());
}
