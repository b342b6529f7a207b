//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;

use ccsim_core::bayesnet::{BayesNet, VarRole, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn experiment_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../experiments").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random binary DAG on `n` nodes named `x0..`; parents always have a
/// smaller index. Table counts are drawn from (0.1, 5).
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, max_parents: usize) -> BayesNet {
    let vars: Vec<Variable> = (0..n)
        .map(|i| Variable::new(format!("x{i}"), 2, VarRole::Context))
        .collect();
    let mut edges = Vec::new();
    for c in 1..n {
        let k = rng.random_range(0..=max_parents.min(c));
        let mut pool: Vec<usize> = (0..c).collect();
        for _ in 0..k {
            let p = pool.swap_remove(rng.random_range(0..pool.len()));
            edges.push((format!("x{p}"), format!("x{c}")));
        }
    }
    let mut net = BayesNet::laplace(vars, &edges).unwrap();
    for i in 0..n {
        let len = net.cpt(i).counts.len();
        let counts: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..5.0)).collect();
        net.set_counts(&format!("x{i}"), &counts).unwrap();
    }
    net
}

/// Row-normalized probability of `assignment[i]` read straight from counts.
pub fn cpt_prob(net: &BayesNet, i: usize, assignment: &[usize]) -> f64 {
    let cpt = net.cpt(i);
    let k = net.cardinality(i);
    let row = cpt
        .parents
        .iter()
        .fold(0, |r, &p| r * net.cardinality(p) + assignment[p]);
    let cells = &cpt.counts[row * k..(row + 1) * k];
    cells[assignment[i]] / cells.iter().sum::<f64>()
}

/// Full joint as (assignment, probability) pairs, by product of table cells.
pub fn joint(net: &BayesNet) -> Vec<(Vec<usize>, f64)> {
    let cards: Vec<usize> = (0..net.len()).map(|i| net.cardinality(i)).collect();
    let total: usize = cards.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut a = vec![0usize; cards.len()];
    for _ in 0..total {
        let p: f64 = (0..net.len()).map(|i| cpt_prob(net, i, &a)).product();
        out.push((a.clone(), p));
        for j in (0..a.len()).rev() {
            a[j] += 1;
            if a[j] < cards[j] {
                break;
            }
            a[j] = 0;
        }
    }
    out
}

/// `P(query = values | evidence)` by summing the joint.
pub fn enumerate_posterior(
    joint: &[(Vec<usize>, f64)],
    query: &[usize],
    values: &[usize],
    evidence: &[(usize, usize)],
) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, p) in joint {
        if evidence.iter().all(|&(v, x)| a[v] == x) {
            den += p;
            if query.iter().zip(values).all(|(&q, &x)| a[q] == x) {
                num += p;
            }
        }
    }
    num / den
}

/// D-separation via the moralized ancestral graph: `xs` and `ys` are
/// separated by `zs` iff removing `zs` from the moral graph of the ancestors
/// of all three sets disconnects them.
pub fn dsep_moral(net: &BayesNet, xs: &[usize], ys: &[usize], zs: &[usize]) -> bool {
    let mut anc: BTreeSet<usize> = BTreeSet::new();
    let mut stack: Vec<usize> = xs.iter().chain(ys).chain(zs).copied().collect();
    while let Some(v) = stack.pop() {
        if anc.insert(v) {
            stack.extend(net.parents(v).iter().copied());
        }
    }
    let n = net.len();
    let mut adj = vec![BTreeSet::new(); n];
    for &c in &anc {
        let ps = net.parents(c);
        for &p in ps {
            adj[p].insert(c);
            adj[c].insert(p);
        }
        for &a in ps {
            for &b in ps {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let blocked: BTreeSet<usize> = zs.iter().copied().collect();
    let targets: BTreeSet<usize> = ys.iter().copied().collect();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut queue: VecDeque<usize> = xs.iter().copied().filter(|x| !blocked.contains(x)).collect();
    while let Some(v) = queue.pop_front() {
        if !seen.insert(v) {
            continue;
        }
        if targets.contains(&v) {
            return false;
        }
        for &w in &adj[v] {
            if anc.contains(&w) && !blocked.contains(&w) && !seen.contains(&w) {
                queue.push_back(w);
            }
        }
    }
    true
}

/// Ancestral sample of every variable.
pub fn sample(net: &BayesNet, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut a = vec![0; net.len()];
    for &i in net.topological_order() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let k = net.cardinality(i);
        a[i] = k - 1;
        for x in 0..k {
            a[i] = x;
            acc += cpt_prob(net, i, &a);
            if u < acc {
                break;
            }
        }
    }
    a
}

fn random_counts(net: &mut BayesNet, name: &str, rng: &mut ChaCha8Rng) {
    let len = net.cpt(net.var(name).unwrap()).counts.len();
    let counts: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..5.0)).collect();
    net.set_counts(name, &counts).unwrap();
}

fn copy_counts(to: &mut BayesNet, to_name: &str, from: &BayesNet, from_name: &str) {
    let counts = from.cpt(from.var(from_name).unwrap()).counts.clone();
    to.set_counts(to_name, &counts).unwrap();
}

fn edges(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(p, c)| (p.to_string(), c.to_string())).collect()
}

/// Two-service pipeline split into agent fragments plus the same model
/// written by hand as one network with qualified names.
pub struct PipelineFixture {
    pub up: BayesNet,
    pub down: BayesNet,
    pub map: ccsim_core::composition::IdentificationMap,
    pub monolith: BayesNet,
}

pub fn pipeline_fixture(rng: &mut ChaCha8Rng) -> PipelineFixture {
    use ccsim_core::composition::{IdentificationMap, VarRef};
    let mut up = BayesNet::laplace(
        vec![
            Variable::new("load", 2, VarRole::Context),
            Variable::new("res", 3, VarRole::Context),
            Variable::new("lat_u", 2, VarRole::ObservationMetric),
            Variable::new("slo_u", 2, VarRole::SloIndicator),
        ],
        &edges(&[("load", "lat_u"), ("res", "lat_u"), ("lat_u", "slo_u")]),
    )
    .unwrap();
    let mut down = BayesNet::laplace(
        vec![
            Variable::new("load", 2, VarRole::Context),
            Variable::new("in_res", 3, VarRole::Context),
            Variable::new("lat_d", 3, VarRole::ObservationMetric),
            Variable::new("slo_d", 2, VarRole::SloIndicator),
        ],
        &edges(&[("load", "lat_d"), ("in_res", "lat_d"), ("lat_d", "slo_d")]),
    )
    .unwrap();
    for v in ["load", "res", "lat_u", "slo_u"] {
        random_counts(&mut up, v, rng);
    }
    for v in ["load", "in_res", "lat_d", "slo_d"] {
        random_counts(&mut down, v, rng);
    }
    let map = IdentificationMap::new(vec![
        (VarRef::new("up", "res"), VarRef::new("down", "in_res")),
        (VarRef::new("up", "load"), VarRef::new("down", "load")),
    ]);
    let mut monolith = BayesNet::laplace(
        vec![
            Variable::new("up.load", 2, VarRole::Context),
            Variable::new("up.res", 3, VarRole::Context),
            Variable::new("up.lat_u", 2, VarRole::ObservationMetric),
            Variable::new("up.slo_u", 2, VarRole::SloIndicator),
            Variable::new("down.lat_d", 3, VarRole::ObservationMetric),
            Variable::new("down.slo_d", 2, VarRole::SloIndicator),
        ],
        &edges(&[
            ("up.load", "up.lat_u"),
            ("up.res", "up.lat_u"),
            ("up.lat_u", "up.slo_u"),
            ("up.load", "down.lat_d"),
            ("up.res", "down.lat_d"),
            ("down.lat_d", "down.slo_d"),
        ]),
    )
    .unwrap();
    for v in ["load", "res", "lat_u", "slo_u"] {
        copy_counts(&mut monolith, &format!("up.{v}"), &up, v);
    }
    for v in ["lat_d", "slo_d"] {
        copy_counts(&mut monolith, &format!("down.{v}"), &down, v);
    }
    PipelineFixture {
        up,
        down,
        map,
        monolith,
    }
}

/// Random evidence over the non-indicator variables of `net`.
pub fn random_evidence(net: &BayesNet, rng: &mut ChaCha8Rng) -> std::collections::BTreeMap<String, usize> {
    let mut ev = std::collections::BTreeMap::new();
    for (i, v) in net.variables().iter().enumerate() {
        if v.role != VarRole::SloIndicator && rng.random_bool(0.5) {
            ev.insert(v.name.clone(), rng.random_range(0..net.cardinality(i)));
        }
    }
    ev
}

/// Five binary nodes, a -> b -> d and a -> c -> e, with fixed tables.
pub fn five_node_truth() -> BayesNet {
    let vars: Vec<Variable> = ["a", "b", "c", "d", "e"]
        .iter()
        .map(|n| Variable::new(*n, 2, VarRole::Context))
        .collect();
    let edges: Vec<(String, String)> = [("a", "b"), ("a", "c"), ("b", "d"), ("c", "e")]
        .iter()
        .map(|(p, c)| (p.to_string(), c.to_string()))
        .collect();
    let mut net = BayesNet::laplace(vars, &edges).unwrap();
    net.set_probabilities("a", &[0.45, 0.55]).unwrap();
    net.set_probabilities("b", &[0.7, 0.3, 0.35, 0.65]).unwrap();
    net.set_probabilities("c", &[0.6, 0.4, 0.25, 0.75]).unwrap();
    net.set_probabilities("d", &[0.8, 0.2, 0.4, 0.6]).unwrap();
    net.set_probabilities("e", &[0.3, 0.7, 0.55, 0.45]).unwrap();
    net
}
