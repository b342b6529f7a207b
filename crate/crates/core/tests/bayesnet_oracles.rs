mod common;

use ccsim_core::bayesnet::{bic_local_score, d_separated, learn_structure, markov_blanket, BayesNet, Variable};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn random_query(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: usize,
) -> (Vec<usize>, Vec<usize>, Vec<(usize, usize)>) {
    let mut pool: Vec<usize> = (0..n).collect();
    let nq = rng.random_range(1..=2.min(n));
    let query: Vec<usize> = (0..nq).map(|_| pool.swap_remove(rng.random_range(0..pool.len()))).collect();
    let ne = rng.random_range(0..=3.min(pool.len()));
    let evidence = (0..ne)
        .map(|_| (pool.swap_remove(rng.random_range(0..pool.len())), rng.random_range(0..2)))
        .collect();
    let values = query.iter().map(|_| rng.random_range(0..2)).collect();
    (query, values, evidence)
}

#[test]
fn elimination_matches_enumeration_on_ten_node_nets() {
    let mut r = rng(10);
    for _ in 0..5 {
        let net = random_dag(&mut r, 10, 3);
        let j = joint(&net);
        for _ in 0..100 {
            let (q, vals, ev) = random_query(&mut r, 10);
            let d = net.infer(&q, &ev).unwrap();
            let want = enumerate_posterior(&j, &q, &vals, &ev);
            assert!((d.get(&vals) - want).abs() <= 1e-9, "{q:?} {ev:?}");
        }
    }
}

#[test]
fn log_evidence_matches_joint_sum() {
    let mut r = rng(11);
    let net = random_dag(&mut r, 8, 3);
    let j = joint(&net);
    for _ in 0..50 {
        let (_, _, ev) = random_query(&mut r, 8);
        let want: f64 = j
            .iter()
            .filter(|(a, _)| ev.iter().all(|&(v, x)| a[v] == x))
            .map(|(_, p)| p)
            .sum();
        assert!((net.log_evidence(&ev).unwrap() - want.ln()).abs() < 1e-9);
    }
}

#[test]
fn surprise_matches_joint_lookup() {
    let mut r = rng(12);
    let net = random_dag(&mut r, 6, 2);
    for (a, p) in joint(&net).iter().step_by(7) {
        assert!((net.surprise(a).unwrap() + p.ln()).abs() < 1e-12);
    }
}

#[test]
fn blanket_separates_target_from_the_rest() {
    let mut r = rng(13);
    for _ in 0..30 {
        let n = r.random_range(2..=10);
        let net = random_dag(&mut r, n, 3);
        for t in 0..n {
            let name = format!("x{t}");
            let mb = markov_blanket(&net, &[&name]).unwrap();
            let members: Vec<usize> = mb.members.iter().map(|m| net.var(m).unwrap()).collect();
            for v in (0..n).filter(|v| *v != t && !members.contains(v)) {
                assert!(dsep_moral(&net, &[t], &[v], &members));
            }
            for &m in &members {
                let rest: Vec<usize> = members.iter().copied().filter(|x| *x != m).collect();
                assert!(!dsep_moral(&net, &[t], &[m], &rest), "member x{m} of x{t} is redundant");
            }
        }
    }
}

#[test]
fn d_separation_agrees_with_moral_graph() {
    let mut r = rng(14);
    for _ in 0..40 {
        let n = r.random_range(3..=9);
        let net = random_dag(&mut r, n, 3);
        for _ in 0..30 {
            let mut pool: Vec<usize> = (0..n).collect();
            let x = pool.swap_remove(r.random_range(0..pool.len()));
            let y = pool.swap_remove(r.random_range(0..pool.len()));
            let nz = r.random_range(0..=pool.len().min(3));
            let zs: Vec<usize> = (0..nz).map(|_| pool.swap_remove(r.random_range(0..pool.len()))).collect();
            assert_eq!(d_separated(&net, &[x], &[y], &zs), dsep_moral(&net, &[x], &[y], &zs));
        }
    }
}

#[test]
fn learned_rows_approach_generating_tables() {
    let truth = five_node_truth();
    let mut r = rng(15);
    let data: Vec<Vec<usize>> = (0..10_000).map(|_| sample(&truth, &mut r)).collect();
    let vars = truth.variables().to_vec();
    let learned = BayesNet::laplace(vars, &truth.edges()).unwrap().update_parameters(&data).unwrap();
    for i in 0..truth.len() {
        let k = truth.cardinality(i);
        for row in 0..truth.cpt(i).rows(k) {
            let l1: f64 = (0..k)
                .map(|x| (learned.cpt(i).probability(row, k, x) - truth.cpt(i).probability(row, k, x)).abs())
                .sum();
            assert!(l1 <= 0.05, "{} row {row}: {l1}", truth.variable(i).name);
        }
    }
}

#[test]
fn independent_data_has_no_edges() {
    let vars: Vec<Variable> = ["p", "q", "r"].iter().map(|n| Variable::binary(*n)).collect();
    let mut r = rng(16);
    let data: Vec<Vec<usize>> = (0..1000)
        .map(|_| (0..3).map(|_| r.random_range(0..2)).collect())
        .collect();
    let cards = [2, 2, 2];
    for c in 0..3 {
        for p in (0..3).filter(|p| *p != c) {
            let delta = bic_local_score(&cards, &data, c, &[p]) - bic_local_score(&cards, &data, c, &[]);
            assert!(delta < 0.0, "edge {p}->{c} gains {delta}");
        }
    }
    assert!(learn_structure(&vars, &data, None, 3).unwrap().edges().is_empty());
}

#[test]
fn deterministic_chain_recovers_edge_with_tie_break() {
    let vars = vec![Variable::binary("A"), Variable::binary("B")];
    let mut r = rng(17);
    let data: Vec<Vec<usize>> = (0..1000)
        .map(|_| {
            let a = usize::from(r.random_bool(0.4));
            vec![a, a]
        })
        .collect();
    let cards = [2, 2];
    let ab = bic_local_score(&cards, &data, 0, &[]) + bic_local_score(&cards, &data, 1, &[0]);
    let ba = bic_local_score(&cards, &data, 1, &[]) + bic_local_score(&cards, &data, 0, &[1]);
    assert!((ab - ba).abs() < 1e-9);
    let net = learn_structure(&vars, &data, None, 3).unwrap();
    assert_eq!(net.edges(), vec![("A".to_string(), "B".to_string())]);
}

#[test]
fn confident_prediction_has_low_surprise() {
    let vars = vec![Variable::binary("u"), Variable::binary("v")];
    let mut net = BayesNet::laplace(vars, &[("u".into(), "v".into())]).unwrap();
    let data = vec![vec![1, 1]; 500];
    net.absorb(&data).unwrap();
    let s = net.surprise(&[1, 1]).unwrap();
    let want = -((501.0f64 / 502.0) * (501.0 / 502.0)).ln();
    assert!((s - want).abs() < 1e-12);
    assert!(s < 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn posteriors_are_normalized(seed in any::<u64>(), n in 2usize..8) {
        let mut r = rng(seed);
        let net = random_dag(&mut r, n, 3);
        let (q, _, ev) = random_query(&mut r, n);
        let d = net.infer(&q, &ev).unwrap();
        prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(d.probs.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn absorbing_data_only_adds_counts(seed in any::<u64>(), n in 2usize..7, m in 0usize..20) {
        let mut r = rng(seed);
        let net = random_dag(&mut r, n, 2);
        let data: Vec<Vec<usize>> = (0..m).map(|_| sample(&net, &mut r)).collect();
        let learned = net.update_parameters(&data).unwrap();
        let before: f64 = net.cpts().iter().flat_map(|c| &c.counts).sum();
        let after: f64 = learned.cpts().iter().flat_map(|c| &c.counts).sum();
        prop_assert!((after - before - (m * n) as f64).abs() < 1e-9);
        for (a, b) in net.cpts().iter().zip(learned.cpts()) {
            prop_assert!(a.counts.iter().zip(&b.counts).all(|(x, y)| y >= x));
        }
    }

    #[test]
    fn json_round_trip_preserves_inference(seed in any::<u64>(), n in 2usize..7) {
        let mut r = rng(seed);
        let net = random_dag(&mut r, n, 3);
        let back = BayesNet::from_json(&net.to_json()).unwrap();
        prop_assert_eq!(&back, &net);
    }
}
