mod common;

use std::collections::BTreeMap;

use ccsim_core::agent::AifAgent;
use ccsim_core::bayesnet::{BayesNet, VarRole, Variable};
use ccsim_core::composition::{
    compose, global_slo_estimate, incorporate_summaries, publish_summary, ConstraintReport, CoordinationSummary,
    IdentificationMap, SloEstimate, VarRef,
};
use ccsim_core::scenario::Scenario;
use ccsim_core::sim::{Agent, World};
use common::*;

fn probability(e: &SloEstimate) -> f64 {
    match e {
        SloEstimate::Probability(p) => *p,
        SloEstimate::ImpossibleEvidence => panic!("impossible evidence"),
    }
}

#[test]
fn composed_pipeline_matches_hand_built_monolith() {
    let mut r = rng(70);
    let fx = pipeline_fixture(&mut r);
    let composed = compose(&[("up", &fx.up), ("down", &fx.down)], &fx.map).unwrap();
    assert_eq!(composed.net.len(), fx.monolith.len());
    assert_eq!(composed.var_name("down", "in_res"), Some("up.res"));
    assert_eq!(composed.var_name("down", "load"), Some("up.load"));
    let j = joint(&fx.monolith);
    for _ in 0..50 {
        let ev = random_evidence(&fx.monolith, &mut r);
        let est = global_slo_estimate(&composed, &ev).unwrap();
        let ev_idx: Vec<(usize, usize)> = ev.iter().map(|(k, &x)| (fx.monolith.var(k).unwrap(), x)).collect();
        assert_eq!(est.len(), 2);
        for (name, e) in &est {
            let i = fx.monolith.var(name).unwrap();
            let mono = fx.monolith.infer(&[i], &ev_idx).unwrap().probs[0];
            let brute = enumerate_posterior(&j, &[i], &[0], &ev_idx);
            assert!((probability(e) - mono).abs() <= 1e-9, "{name} {ev:?}");
            assert!((mono - brute).abs() <= 1e-9);
        }
    }
}

#[test]
fn disjoint_union_factorizes() {
    let mut r = rng(71);
    let a = random_dag(&mut r, 3, 2);
    let b = random_dag(&mut r, 3, 2);
    let c = compose(&[("a", &a), ("b", &b)], &IdentificationMap::default()).unwrap();
    assert_eq!(c.net.len(), 6);
    let (x, y) = (c.net.var("a.x2").unwrap(), c.net.var("b.x2").unwrap());
    let pair = c.net.infer(&[x, y], &[]).unwrap();
    let pa = a.infer(&[2], &[]).unwrap();
    let pb = b.infer(&[2], &[]).unwrap();
    for i in 0..2 {
        for k in 0..2 {
            assert!((pair.get(&[i, k]) - pa.probs[i] * pb.probs[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn identified_chain_multiplies_tables() {
    let mut left = BayesNet::laplace(
        vec![Variable::binary("a"), Variable::binary("x")],
        &[("a".into(), "x".into())],
    )
    .unwrap();
    left.set_probabilities("a", &[0.3, 0.7]).unwrap();
    left.set_probabilities("x", &[0.9, 0.1, 0.2, 0.8]).unwrap();
    let mut right = BayesNet::laplace(
        vec![Variable::binary("x2"), Variable::binary("b")],
        &[("x2".into(), "b".into())],
    )
    .unwrap();
    right.set_probabilities("b", &[0.6, 0.4, 0.1, 0.9]).unwrap();
    let map = IdentificationMap::new(vec![(VarRef::new("l", "x"), VarRef::new("r", "x2"))]);
    let c = compose(&[("l", &left), ("r", &right)], &map).unwrap();
    let b = c.net.var("r.b").unwrap();
    let a = c.net.var("l.a").unwrap();
    // P(b=0 | a=1) = 0.2 * 0.6 + 0.8 * 0.1
    let got = c.net.infer(&[b], &[(a, 1)]).unwrap().probs[0];
    assert!((got - 0.2).abs() < 1e-12);
    // P(b=0) = sum_a P(a) sum_x P(x|a) P(b=0|x)
    let want = 0.3 * (0.9 * 0.6 + 0.1 * 0.1) + 0.7 * (0.2 * 0.6 + 0.8 * 0.1);
    assert!((c.net.infer(&[b], &[]).unwrap().probs[0] - want).abs() < 1e-12);
}

#[test]
fn determining_evidence_gives_certain_indicators() {
    let mut net = BayesNet::laplace(
        vec![Variable::binary("m"), Variable::new("slo_m", 2, VarRole::SloIndicator)],
        &[("m".into(), "slo_m".into())],
    )
    .unwrap();
    net.set_probabilities("slo_m", &[1.0, 0.0, 0.0, 1.0]).unwrap();
    let c = compose(&[("s", &net)], &IdentificationMap::default()).unwrap();
    for (m, want) in [(0, 1.0), (1, 0.0)] {
        let est = global_slo_estimate(&c, &BTreeMap::from([("s.m".to_string(), m)])).unwrap();
        assert_eq!(est["s.slo_m"], SloEstimate::Probability(want));
    }
    net.set_probabilities("m", &[1.0, 0.0]).unwrap();
    let c = compose(&[("s", &net)], &IdentificationMap::default()).unwrap();
    let bad = BTreeMap::from([("s.m".to_string(), 1)]);
    assert_eq!(
        global_slo_estimate(&c, &bad).unwrap()["s.slo_m"],
        SloEstimate::ImpossibleEvidence
    );
}

fn pipeline() -> (Scenario, World) {
    let sc = Scenario::from_path(scenario_path("pipeline-coordination.scn")).unwrap();
    let world = World::new(std::sync::Arc::new(sc.clone())).unwrap();
    (sc, world)
}

fn agents(sc: &Scenario, world: &World) -> (AifAgent, AifAgent) {
    let mut up = AifAgent::from_scenario(sc, "ingest", true).unwrap();
    let mut down = AifAgent::from_scenario(sc, "detect", true).unwrap();
    up.begin_step(&world.observe("ingest").unwrap());
    down.begin_step(&world.observe("detect").unwrap());
    (up, down)
}

fn totals(agent: &AifAgent) -> Vec<f64> {
    let obs = agent.current_observation().unwrap().clone();
    agent.expected_free_energy(&obs).unwrap().iter().map(|b| b.total).collect()
}

#[test]
fn summary_carries_upstream_quality_setting() {
    let (sc, world) = pipeline();
    let (up, _) = agents(&sc, &world);
    let s = publish_summary(&up, 0);
    assert_eq!(s.issuer, "ingest");
    // initial resolution is `high`
    assert_eq!(s.boundary, BTreeMap::from([("resolution".to_string(), 2)]));
    assert_eq!(s.constraints.len(), 2);
    assert!(s.intent.is_some());
    assert_eq!(CoordinationSummary::from_json(&s.to_json()).unwrap(), s);
}

#[test]
fn empty_summary_list_changes_nothing() {
    let (sc, world) = pipeline();
    let (_, mut down) = agents(&sc, &world);
    let before = totals(&down);
    incorporate_summaries(&mut down, &[]);
    assert_eq!(totals(&down), before);
    assert!(down.take_warnings().is_empty());
}

/// Neighbour reports are outcomes the upstream model learns to predict, not
/// planning evidence: on the first complete observation the untrained
/// `nb_` leaf adds exactly ln 2 to the surprise.
#[test]
fn summary_with_empty_boundary_only_reports_constraints() {
    let (sc, world) = pipeline();
    let obs = world.observe("ingest").unwrap();
    let report = CoordinationSummary {
        issuer: "detect".into(),
        t: 1,
        boundary: BTreeMap::new(),
        intent: None,
        constraints: vec![ConstraintReport {
            service: "detect".into(),
            slo: "detect-latency".into(),
            violated: true,
            weight: 1.0,
        }],
    };
    let mut surprise = Vec::new();
    for summaries in [vec![], vec![report]] {
        let mut up = AifAgent::from_scenario(&sc, "ingest", true).unwrap();
        let mut r = ccsim_core::rng::SeedTree::new(1).agent_stream("ingest");
        up.begin_step(&obs);
        up.perceive(&obs);
        up.decide(true, &mut r).unwrap();
        up.begin_step(&obs);
        let before = totals(&up);
        incorporate_summaries(&mut up, &summaries);
        assert_eq!(totals(&up), before);
        assert!(up.take_warnings().is_empty());
        surprise.push(up.perceive(&obs));
    }
    assert!((surprise[1] - surprise[0] - std::f64::consts::LN_2).abs() < 1e-9, "{surprise:?}");
}

#[test]
fn boundary_evidence_matches_direct_clamping() {
    let (sc, world) = pipeline();
    let (up, mut down) = agents(&sc, &world);
    let (_, mut direct) = agents(&sc, &world);
    let unclamped = totals(&down);
    incorporate_summaries(&mut down, &[publish_summary(&up, 0)]);
    assert!(direct.set_boundary("in_ingest_resolution", 2));
    assert_eq!(totals(&down), totals(&direct));
    assert_ne!(totals(&down), unclamped);
    assert_eq!(down.intents().len(), 1);
}

#[test]
fn conflicting_summaries_keep_the_first() {
    let (sc, world) = pipeline();
    let (up, mut down) = agents(&sc, &world);
    let (_, mut direct) = agents(&sc, &world);
    let first = publish_summary(&up, 3);
    let mut second = first.clone();
    second.boundary.insert("resolution".into(), 0);
    let mut stale = first.clone();
    stale.t = 1;
    stale.boundary.insert("resolution".into(), 1);
    incorporate_summaries(&mut down, &[first, stale, second]);
    let warnings = down.take_warnings();
    assert_eq!(warnings.len(), 1, "{warnings:?}");
    assert!(warnings[0].contains("conflicting"));
    direct.set_boundary("in_ingest_resolution", 2);
    assert_eq!(totals(&down), totals(&direct));
}
