mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use ccsim_core::harness::{run_single, Experiment, ExperimentConfig, RunAgent, StaticAgent};
use ccsim_core::infrastructure::{LinkSpec, NodeSpec, Tier, Topology};
use ccsim_core::rng::{SeedTree, CHURN};
use ccsim_core::scenario::{load_scenario, AgentKind, Scenario};
use ccsim_core::services::{Action, ActionKind, Comparator, Metric};
use ccsim_core::sim::{run_episode, Agent, EpisodeOptions, World};
use common::*;
use rand::Rng;

const STATIONARY_ZERO_NOISE: &str = r#"
format_version = 1
horizon = 20
seed = 3

[[nodes]]
id = "cloud"
tier = "cloud"
cpu_capacity = 100

[[applications]]
id = "app"
[applications.workload]
base_rate = 90

[[applications.services]]
id = "s1"
node = "cloud"
demand_per_request = 1
base_latency_ms = 10
replica_capacity = 50
max_replicas = 2

[[applications.services.slos]]
id = "lat"
metric = "latency_ms"
comparator = "<="
threshold = 100

[[bindings]]
service = "s1"
"#;

fn smart_city() -> Scenario {
    Scenario::from_path(scenario_path("smart-city.scn")).unwrap()
}

fn noiseless(mut sc: Scenario) -> Scenario {
    sc.model.noise_sigma = 0.0;
    for a in &mut sc.applications {
        a.workload.noise_sd = 0.0;
    }
    for n in &mut sc.nodes {
        n.p_fail = 0.0;
    }
    sc
}

#[test]
fn smart_city_has_three_bindings_and_round_trips() {
    let sc = smart_city();
    assert_eq!(sc.bindings.len(), 3);
    assert_eq!(sc.nodes.len(), 4);
    assert_eq!(Scenario::from_toml(&sc.to_toml()).unwrap(), sc);
}

#[test]
fn noop_on_zero_noise_scenario_is_a_fixed_point() {
    let sc = Arc::new(load_scenario(STATIONARY_ZERO_NOISE).unwrap());
    let mut world = World::new(sc).unwrap();
    let first = world.state().last_metrics.clone();
    for _ in 0..5 {
        world.step(&BTreeMap::new());
        assert_eq!(world.state().last_metrics, first);
    }
}

#[test]
fn scale_up_at_high_host_utilization_beats_noop() {
    // 90 rps x 1 unit on a 100-unit host; the single 50-unit replica is at 1.8
    let sc = Arc::new(load_scenario(STATIONARY_ZERO_NOISE).unwrap());
    let world = World::new(sc).unwrap();
    let util = world.state().last_metrics["s1"].utilization;
    assert!((util - 0.9).abs() < 1e-12, "{util}");
    let mut a = world.clone();
    a.step(&BTreeMap::new());
    let mut b = world.clone();
    let out = b.step(&BTreeMap::from([(
        "s1".to_string(),
        Action::new("s1", "s1", ActionKind::Scale(1)),
    )]));
    assert!(out.rejected.is_empty());
    let (noop, scaled) = (a.state().last_metrics["s1"].latency_ms, b.state().last_metrics["s1"].latency_ms);
    // replica utilization 1.8 saturates (x50); two replicas leave u = 0.9 (x10)
    assert!((noop - 500.0).abs() < 1e-9, "{noop}");
    assert!((scaled - 100.0).abs() < 1e-9, "{scaled}");
}

#[test]
fn horizon_one_gives_one_record() {
    let mut sc = load_scenario(STATIONARY_ZERO_NOISE).unwrap();
    sc.horizon = 1;
    let agents: Vec<Box<dyn Agent>> = vec![Box::new(StaticAgent::new("s1"))];
    let log = run_episode(Arc::new(sc), agents, EpisodeOptions::default()).unwrap();
    assert_eq!(log.records.len(), 1);
}

#[test]
fn random_agents_rerun_byte_identical() {
    let sc = smart_city();
    let agent = RunAgent::new(AgentKind::Random, false);
    let a = run_single(&sc, &agent, 7, EpisodeOptions::default()).unwrap().to_csv();
    let b = run_single(&sc, &agent, 7, EpisodeOptions::default()).unwrap().to_csv();
    assert_eq!(a, b);
    let c = run_single(&sc, &agent, 8, EpisodeOptions::default()).unwrap().to_csv();
    assert_ne!(a, c);
}

#[test]
fn smart_city_t0_matches_hand_computation() {
    let world = World::new(Arc::new(noiseless(smart_city()))).unwrap();
    let m = &world.state().last_metrics;
    // rate 20 at t=0; all parameters at their first level
    // ingest: demand 0.5*0.6, u = 20*0.3/10 = 0.6 -> x2.5, base 4*0.8
    assert!((m["ingest"].latency_ms - 8.0).abs() < 1e-9);
    assert!((m["ingest"].energy_j - 20.0 * 0.3 * 0.5).abs() < 1e-9);
    // detect: low-res input x0.7, u = 20*0.7/20 = 0.7 -> x10/3, base 12*0.7, hop 5 ms
    assert!((m["detect"].latency_ms - (8.0 + 5.0 + 8.4 * 10.0 / 3.0)).abs() < 1e-9);
    // render: u = 20*0.4/10 = 0.8 -> x5, base 10, hop 15 ms
    assert!((m["render"].latency_ms - (41.0 + 15.0 + 50.0)).abs() < 1e-9);
    assert!((m["render"].energy_j - 20.0 * 0.4 * 1.2).abs() < 1e-9);
    let flags: BTreeMap<String, bool> = world
        .state()
        .slo_flags("ingest")
        .into_iter()
        .chain(world.state().slo_flags("render"))
        .collect();
    assert!(!flags["ingest-quality"] && flags["ingest-latency"]);
    assert!(!flags["render-quality"] && flags["render-latency"]);
}

fn node(id: &str) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        tier: Tier::Fog,
        cpu_capacity: 10.0,
        gpu_units: 0,
        memory_mb: 1024.0,
        energy_coefficient: 1.0,
        p_fail: 0.0,
        p_recover: 0.0,
    }
}

fn best_simple_path(adj: &BTreeMap<(usize, usize), f64>, n: usize, at: usize, dst: usize, seen: &mut Vec<bool>) -> f64 {
    if at == dst {
        return 0.0;
    }
    seen[at] = true;
    let mut best = f64::INFINITY;
    for next in 0..n {
        if let Some(w) = adj.get(&(at, next)) {
            if !seen[next] {
                best = best.min(w + best_simple_path(adj, n, next, dst, seen));
            }
        }
    }
    seen[at] = false;
    best
}

#[test]
fn path_latency_matches_simple_path_enumeration() {
    let mut r = rng(21);
    for _ in 0..20 {
        let n = 5;
        let mut adj = BTreeMap::new();
        let mut links = Vec::new();
        let mut add = |a: usize, b: usize, w: f64, adj: &mut BTreeMap<(usize, usize), f64>| {
            if a != b && !adj.contains_key(&(a, b)) {
                adj.insert((a, b), w);
                adj.insert((b, a), w);
                links.push(LinkSpec {
                    a: format!("n{a}"),
                    b: format!("n{b}"),
                    latency_ms: w,
                    bandwidth_mbps: 100.0,
                });
            }
        };
        for i in 1..n {
            let j = r.random_range(0..i);
            add(i, j, f64::from(r.random_range(1..20u32)), &mut adj);
        }
        for _ in 0..4 {
            let (a, b) = (r.random_range(0..n), r.random_range(0..n));
            add(a, b, f64::from(r.random_range(1..20u32)), &mut adj);
        }
        let topo = Topology::new((0..n).map(|i| node(&format!("n{i}"))).collect(), links).unwrap();
        for a in 0..n {
            for b in 0..n {
                let want = best_simple_path(&adj, n, a, b, &mut vec![false; n]);
                let got = topo.path_latency(&format!("n{a}"), &format!("n{b}")).unwrap().unwrap();
                assert!((got - want).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn churn_down_fraction_matches_stationary_law() {
    let mut spec = node("x");
    spec.p_fail = 0.1;
    spec.p_recover = 0.3;
    let mut topo = Topology::new(vec![spec], Vec::new()).unwrap();
    let mut rng = SeedTree::new(5).stream(CHURN);
    let mut down = 0;
    for _ in 0..10_000 {
        topo = topo.apply_churn(&mut rng);
        down += usize::from(!topo.is_available("x").unwrap());
    }
    let frac = down as f64 / 10_000.0;
    assert!((frac - 0.25).abs() <= 0.02, "{frac}");
}

#[test]
fn threshold_golden_number() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/smart-city-threshold.txt");
    let sc = smart_city();
    let agent = RunAgent::new(AgentKind::Threshold, false);
    let rate = run_single(&sc, &agent, sc.seed, EpisodeOptions::default()).unwrap().fulfillment_rate();
    let again = run_single(&sc, &agent, sc.seed, EpisodeOptions::default()).unwrap().fulfillment_rate();
    assert_eq!(rate.to_bits(), again.to_bits());
    let golden: f64 = std::fs::read_to_string(&path).unwrap().trim().parse().unwrap();
    assert_eq!(rate, golden);
}

#[test]
fn fulfillment_rate_matches_raw_metric_columns() {
    let sc = Scenario::from_path(scenario_path("smart-city-slo-shift.scn")).unwrap();
    let log = run_single(&sc, &RunAgent::new(AgentKind::Aif, false), 4, EpisodeOptions::default()).unwrap();
    let csv = log.to_csv();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ct, cs) = (col("t"), col("service"));
    let mut per_step: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for row in reader.records() {
        let row = row.unwrap();
        let t: u64 = row[ct].parse().unwrap();
        let service = &row[cs];
        let slos = sc
            .slo_schedule
            .iter()
            .filter(|c| c.service == service && c.t <= t)
            .max_by_key(|c| c.t)
            .map(|c| c.slos.clone())
            .unwrap_or_else(|| sc.service(service).unwrap().slos.clone());
        let entry = per_step.entry(t).or_default();
        for s in &slos {
            let column = match s.metric {
                Metric::LatencyMs => "latency_ms",
                Metric::ThroughputRps => "throughput_rps",
                Metric::EnergyJ => "energy_j",
                Metric::QualityLevel => "quality_level",
            };
            let v: f64 = row[col(column)].parse().unwrap();
            let ok = match s.comparator {
                Comparator::AtMost => v <= s.threshold,
                Comparator::AtLeast => v >= s.threshold,
            };
            entry.1 += s.weight;
            if ok {
                entry.0 += s.weight;
            }
        }
    }
    let rate = per_step.values().map(|(ok, tot)| ok / tot).sum::<f64>() / per_step.len() as f64;
    assert_eq!(per_step.len() as u64, sc.horizon);
    assert!((rate - log.fulfillment_rate()).abs() < 1e-12);
}

#[test]
fn parallel_runs_equal_sequential_runs() {
    let cfg = ExperimentConfig::from_toml(&format!(
        "scenario = {:?}\nagents = [\"aif\", \"random\"]\nseeds = [1, 2, 3]\n[metrics]\nefe = true\n",
        scenario_path("smart-city.scn")
    ))
    .unwrap();
    let exp = Experiment::prepare(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    exp.run(Some(dir.path())).unwrap();
    for agent in &exp.agents {
        for seed in [1, 2, 3] {
            let opts = EpisodeOptions {
                record_efe: true,
                ..EpisodeOptions::default()
            };
            let seq = run_single(&exp.scenario, agent, seed, opts).unwrap().to_csv();
            let par = std::fs::read_to_string(dir.path().join(format!("{}_seed{seed}.csv", agent.label))).unwrap();
            assert_eq!(seq, par, "{} seed {seed}", agent.label);
        }
    }
}

#[test]
fn oracle_weakly_dominates_static_without_noise() {
    let sc = noiseless(smart_city());
    for seed in 1..=3 {
        let oracle = run_single(&sc, &RunAgent::new(AgentKind::OracleGreedy, false), seed, EpisodeOptions::default())
            .unwrap()
            .fulfillment_rate();
        let fixed = run_single(&sc, &RunAgent::new(AgentKind::Static, false), seed, EpisodeOptions::default())
            .unwrap()
            .fulfillment_rate();
        assert!(oracle >= fixed, "seed {seed}: {oracle} < {fixed}");
    }
}

#[test]
fn cadence_two_noops_on_odd_steps() {
    let mut sc = smart_city();
    for b in &mut sc.bindings {
        b.act_every_k = 2;
    }
    let log = run_single(&sc, &RunAgent::new(AgentKind::Random, false), 1, EpisodeOptions::default()).unwrap();
    let odd: BTreeSet<String> = log
        .records
        .iter()
        .filter(|r| r.t % 2 == 1)
        .flat_map(|r| r.agents.iter().map(|a| a.action.to_string()))
        .collect();
    assert_eq!(odd, BTreeSet::from(["noop".to_string()]));
}
