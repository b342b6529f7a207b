mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ccsim_core::error::HarnessError;
use ccsim_core::harness::{compare, Experiment, ExperimentConfig, ExperimentSummary};
use ccsim_core::scenario::Scenario;
use common::scenario_path;

fn experiment(agents: &str, seeds: &str, horizon: u64, timing: bool) -> Experiment {
    let scn = scenario_path("smart-city.scn");
    let text = format!(
        "scenario = {:?}\nagents = {agents}\nseeds = {seeds}\n[metrics]\ntiming = {timing}\n",
        scn.display().to_string()
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let mut sc = Scenario::from_path(&scn).unwrap();
    sc.horizon = horizon;
    Experiment::with_scenario(cfg, sc).unwrap()
}

fn listing(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn one_agent_one_seed_writes_one_log_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let summary = experiment(r#"["static"]"#, "[3]", 30, false).run(Some(dir.path())).unwrap();
    let want: BTreeSet<String> = ["static_seed3.csv", "summary.json"].iter().map(|s| s.to_string()).collect();
    assert_eq!(listing(dir.path()), want);
    assert_eq!(summary.runs.len(), 1);
    let csv = fs::read_to_string(dir.path().join("static_seed3.csv")).unwrap();
    // header plus one row per (step, service)
    assert_eq!(csv.lines().count(), 1 + 30 * 3);
    let back = ExperimentSummary::from_path(dir.path().join("summary.json")).unwrap();
    assert_eq!(back, summary);
}

#[test]
fn two_agents_five_seeds_aggregate_per_label() {
    let dir = tempfile::tempdir().unwrap();
    let summary = experiment(r#"["random", "threshold"]"#, "[1, 2, 3, 4, 5]", 40, true)
        .run(Some(dir.path()))
        .unwrap();
    let files = listing(dir.path());
    assert_eq!(files.iter().filter(|f| f.ends_with(".csv")).count(), 10);
    assert!(files.contains("summary.json") && files.contains("timing.json"));
    assert_eq!(summary.runs.len(), 10);
    for label in ["random", "threshold"] {
        let agg = &summary.aggregates[label];
        assert_eq!(agg.fulfillment.n, 5);
        let rates = summary.rates(label);
        let mean = rates.values().sum::<f64>() / 5.0;
        assert!((agg.fulfillment.mean - mean).abs() < 1e-12);
    }
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["threshold"]["decisions"], 5 * 40 * 3);
}

#[test]
fn comparison_with_itself_is_zero() {
    let summary = experiment(r#"["random"]"#, "[1, 2, 3]", 30, false).run(None).unwrap();
    let c = compare(&summary, "random", &summary, "random").unwrap();
    assert_eq!(c.mean, 0.0);
    assert_eq!(c.ties, 3);
    assert!(matches!(
        compare(&summary, "random", &summary, "aif"),
        Err(HarnessError::Config(_))
    ));
}

#[test]
fn comparison_needs_matching_seeds() {
    let a = experiment(r#"["static"]"#, "[1, 2]", 20, false).run(None).unwrap();
    let b = experiment(r#"["static"]"#, "[1, 3]", 20, false).run(None).unwrap();
    assert!(matches!(compare(&a, "static", &b, "static"), Err(HarnessError::SeedMismatch)));
}

#[test]
fn reruns_are_byte_identical() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let exp = experiment(r#"["aif", "random", "oracle_greedy"]"#, "[4, 5]", 60, false);
    exp.run(Some(d1.path())).unwrap();
    exp.run(Some(d2.path())).unwrap();
    let files = listing(d1.path());
    assert_eq!(files, listing(d2.path()));
    for f in &files {
        assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_validation_rejects_bad_lists() {
    let scn = scenario_path("smart-city.scn");
    let bad = [
        ("[]", "[1]"),
        (r#"["static"]"#, "[]"),
        (r#"["static"]"#, "[1, 1]"),
        (r#"["static", "static"]"#, "[1]"),
    ];
    for (agents, seeds) in bad {
        let text = format!("scenario = {:?}\nagents = {agents}\nseeds = {seeds}\n", scn.display().to_string());
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(Experiment::prepare(cfg).is_err(), "{agents} {seeds}");
    }
    assert!(ExperimentConfig::from_toml("scenario = 'x'\nagents = []\nseeds = []\nbogus = 1\n").is_err());
}
