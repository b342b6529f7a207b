//! Tiered continuum infrastructure: nodes, links, availability churn and
//! host utilization.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::InfraError;
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Edge,
    Fog,
    Cloud,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub tier: Tier,
    /// Abstract compute units per step.
    pub cpu_capacity: f64,
    #[serde(default)]
    pub gpu_units: u32,
    #[serde(default = "default_memory")]
    pub memory_mb: f64,
    /// Joules per consumed compute unit.
    #[serde(default = "default_energy")]
    pub energy_coefficient: f64,
    /// Per-step probability that an available node goes down.
    #[serde(default)]
    pub p_fail: f64,
    /// Per-step probability that a down node comes back.
    #[serde(default)]
    pub p_recover: f64,
}

fn default_memory() -> f64 {
    4096.0
}

fn default_energy() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub latency_ms: f64,
    pub bandwidth_mbps: f64,
}

/// Two-state on/off Markov chain parameters for one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChurnSpec {
    pub p_fail: f64,
    pub p_recover: f64,
}

impl ChurnSpec {
    /// Long-run fraction of steps spent down.
    pub fn stationary_down(&self) -> f64 {
        let total = self.p_fail + self.p_recover;
        if total == 0.0 {
            0.0
        } else {
            self.p_fail / total
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub spec: NodeSpec,
    pub available: bool,
}

impl Node {
    pub fn churn(&self) -> ChurnSpec {
        ChurnSpec {
            p_fail: self.spec.p_fail,
            p_recover: self.spec.p_recover,
        }
    }
}

/// Result of a shortest-path query between two available nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Route {
    pub latency_ms: f64,
    /// Smallest link bandwidth along the chosen path; infinite for `src == dst`.
    pub bottleneck_mbps: f64,
}

/// Where a service runs and with how many replicas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub node: String,
    pub replicas: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<LinkSpec>,
    index: BTreeMap<String, usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Topology {
    /// Builds and validates a topology. All nodes start available.
    pub fn new(nodes: Vec<NodeSpec>, links: Vec<LinkSpec>) -> Result<Self, InfraError> {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(InfraError::DuplicateNode(n.id.clone()));
            }
            validate_node(n)?;
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = BTreeSet::new();
        for (li, l) in links.iter().enumerate() {
            let bad = |reason: &str| InfraError::InvalidLink {
                a: l.a.clone(),
                b: l.b.clone(),
                reason: reason.to_string(),
            };
            let a = *index
                .get(&l.a)
                .ok_or_else(|| InfraError::UnknownNode(l.a.clone()))?;
            let b = *index
                .get(&l.b)
                .ok_or_else(|| InfraError::UnknownNode(l.b.clone()))?;
            if a == b {
                return Err(bad("self-link"));
            }
            if !(l.latency_ms >= 0.0) || !l.latency_ms.is_finite() {
                return Err(bad("latency must be finite and >= 0"));
            }
            if !(l.bandwidth_mbps > 0.0) {
                return Err(bad("bandwidth must be > 0"));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(bad("duplicate link"));
            }
            adjacency[a].push((b, li));
            adjacency[b].push((a, li));
        }

        check_heterogeneity(&nodes)?;

        let topo = Topology {
            nodes: nodes
                .into_iter()
                .map(|spec| Node {
                    spec,
                    available: true,
                })
                .collect(),
            links,
            index,
            adjacency,
        };
        topo.check_connected()?;
        Ok(topo)
    }

    fn check_connected(&self) -> Result<(), InfraError> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(InfraError::Disconnected(self.nodes[i].spec.id.clone())),
            None => Ok(()),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn node(&self, id: &str) -> Result<&Node, InfraError> {
        self.index
            .get(id)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| InfraError::UnknownNode(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn is_available(&self, id: &str) -> Result<bool, InfraError> {
        self.node(id).map(|n| n.available)
    }

    /// Overrides one node's availability flag. Only churn and test set-up
    /// should call this.
    pub fn set_available(&mut self, id: &str, available: bool) -> Result<(), InfraError> {
        let i = *self
            .index
            .get(id)
            .ok_or_else(|| InfraError::UnknownNode(id.to_string()))?;
        self.nodes[i].available = available;
        Ok(())
    }

    pub fn available_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.available).count()
    }

    /// Minimum-latency path over available nodes. `Ok(None)` means the pair
    /// is currently disconnected.
    pub fn route(&self, src: &str, dst: &str) -> Result<Option<Route>, InfraError> {
        let s = *self
            .index
            .get(src)
            .ok_or_else(|| InfraError::UnknownNode(src.to_string()))?;
        let d = *self
            .index
            .get(dst)
            .ok_or_else(|| InfraError::UnknownNode(dst.to_string()))?;
        if s == d {
            return Ok(Some(Route {
                latency_ms: 0.0,
                bottleneck_mbps: f64::INFINITY,
            }));
        }
        if !self.nodes[s].available || !self.nodes[d].available {
            return Ok(None);
        }

        // Dense Dijkstra; topologies stay small and this keeps tie-breaking
        // on node index fully deterministic.
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut bottleneck = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[s] = 0.0;
        loop {
            let mut u = None;
            for i in 0..n {
                if !done[i] && dist[i].is_finite() && u.is_none_or(|j: usize| dist[i] < dist[j]) {
                    u = Some(i);
                }
            }
            let Some(u) = u else { break };
            if u == d {
                break;
            }
            done[u] = true;
            for &(v, li) in &self.adjacency[u] {
                if done[v] || !self.nodes[v].available {
                    continue;
                }
                let link = &self.links[li];
                let cand = dist[u] + link.latency_ms;
                if cand < dist[v] {
                    dist[v] = cand;
                    bottleneck[v] = bottleneck[u].min(link.bandwidth_mbps);
                }
            }
        }
        Ok(dist[d].is_finite().then(|| Route {
            latency_ms: dist[d],
            bottleneck_mbps: bottleneck[d],
        }))
    }

    /// Shortest available-path latency in ms, `None` when unreachable.
    pub fn path_latency(&self, src: &str, dst: &str) -> Result<Option<f64>, InfraError> {
        Ok(self.route(src, dst)?.map(|r| r.latency_ms))
    }

    /// Advances every node's on/off chain by one step. Exactly one uniform
    /// draw is consumed per node, in id order, whatever its state.
    pub fn apply_churn(&self, rng: &mut SimRng) -> Topology {
        let mut next = self.clone();
        for i in self.index.values().copied() {
            let u: f64 = rng.random();
            let node = &mut next.nodes[i];
            if node.available {
                if u < node.spec.p_fail {
                    node.available = false;
                }
            } else if u < node.spec.p_recover {
                node.available = true;
            }
        }
        next
    }

    /// Per-node utilization: sum over hosted services of
    /// `replicas * per-replica demand`, divided by node capacity. Values
    /// above 1.0 denote overload.
    pub fn host_utilization(
        &self,
        placements: &BTreeMap<String, Placement>,
        demands: &BTreeMap<String, f64>,
    ) -> Result<BTreeMap<String, f64>, InfraError> {
        let mut used: BTreeMap<String, f64> =
            self.index.keys().map(|id| (id.clone(), 0.0)).collect();
        for (service, p) in placements {
            let slot = used
                .get_mut(&p.node)
                .ok_or_else(|| InfraError::UnknownNode(p.node.clone()))?;
            let demand = demands.get(service).copied().unwrap_or(0.0);
            *slot += f64::from(p.replicas) * demand;
        }
        for (id, v) in used.iter_mut() {
            *v /= self.node(id)?.spec.cpu_capacity;
        }
        Ok(used)
    }
}

fn validate_node(n: &NodeSpec) -> Result<(), InfraError> {
    let bad = |reason: &str| InfraError::InvalidNode {
        node: n.id.clone(),
        reason: reason.to_string(),
    };
    if !(n.cpu_capacity > 0.0) || !n.cpu_capacity.is_finite() {
        return Err(bad("cpu_capacity must be finite and > 0"));
    }
    if !(n.memory_mb >= 0.0) {
        return Err(bad("memory_mb must be >= 0"));
    }
    if !(n.energy_coefficient >= 0.0) || !n.energy_coefficient.is_finite() {
        return Err(bad("energy_coefficient must be finite and >= 0"));
    }
    for (name, p) in [("p_fail", n.p_fail), ("p_recover", n.p_recover)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(&format!("{name} must lie in [0, 1]")));
        }
    }
    Ok(())
}

fn check_heterogeneity(nodes: &[NodeSpec]) -> Result<(), InfraError> {
    let weakest_cloud = nodes
        .iter()
        .filter(|n| n.tier == Tier::Cloud)
        .min_by(|a, b| a.cpu_capacity.total_cmp(&b.cpu_capacity));
    let Some(cloud) = weakest_cloud else {
        return Ok(());
    };
    for edge in nodes.iter().filter(|n| n.tier == Tier::Edge) {
        if edge.cpu_capacity >= cloud.cpu_capacity {
            return Err(InfraError::Heterogeneity {
                edge: edge.id.clone(),
                edge_capacity: edge.cpu_capacity,
                cloud: cloud.id.clone(),
                cloud_capacity: cloud.cpu_capacity,
            });
        }
    }
    Ok(())
}
