//! Deterministic discrete-time world.
//!
//! One call to [`World::step`] applies the joint action (in agent-id order),
//! advances node churn, draws the next workload and regenerates metrics.
//! Agents only ever see [`Observation`]s restricted to their declared scope.

mod episode;
mod log;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bayesnet::discretize;
use crate::error::ScenarioError;
use crate::infrastructure::{Placement, Topology};
use crate::rng::{self, SeedTree, SimRng};
use crate::scenario::{Scenario, ScopeSpec, Source};
use crate::services::{evaluate_slo, workload_rate, Action, ActionKind, Metric, ServiceLoad, Slo};

pub use episode::{
    run_episode, ActContext, Agent, AgentError, AgentRecord, EpisodeLog, EpisodeOptions,
    Lookahead, StepRecord,
};
pub use log::{CSV_COLUMNS, CSV_VERSION};

/// Metrics a service emitted in one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceMetrics {
    pub load_rps: f64,
    pub latency_ms: f64,
    pub throughput_rps: f64,
    pub energy_j: f64,
    pub quality_level: f64,
    pub replicas: u32,
    /// Utilization of the hosting node.
    pub utilization: f64,
    pub placed: bool,
}

impl ServiceMetrics {
    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::LatencyMs => self.latency_ms,
            Metric::ThroughputRps => self.throughput_rps,
            Metric::EnergyJ => self.energy_j,
            Metric::QualityLevel => self.quality_level,
        }
    }
}

/// True state of the simulated system.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub t: u64,
    pub topology: Topology,
    pub placements: BTreeMap<String, Placement>,
    /// Current parameter level per service, in `ServiceSpec::params` order.
    pub configs: BTreeMap<String, Vec<usize>>,
    /// Active SLO set per service.
    pub slos: BTreeMap<String, Vec<Slo>>,
    pub last_metrics: BTreeMap<String, ServiceMetrics>,
    /// Request rate per application for the current step.
    pub rates: BTreeMap<String, f64>,
}

impl WorldState {
    /// A service is unplaced when it has no replicas or its node is down.
    pub fn is_placed(&self, service: &str) -> bool {
        self.placements.get(service).is_some_and(|p| {
            p.replicas > 0 && self.topology.is_available(&p.node).unwrap_or(false)
        })
    }

    /// `(slo id, fulfilled)` for every active SLO of `service`.
    pub fn slo_flags(&self, service: &str) -> Vec<(String, bool)> {
        let Some(m) = self.last_metrics.get(service) else {
            return Vec::new();
        };
        self.slos
            .get(service)
            .map(|slos| {
                slos.iter()
                    .map(|s| (s.id.clone(), evaluate_slo(s, m.value(s.metric))))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Sum of weights of the fulfilled SLOs of `service`.
    pub fn weighted_fulfillment(&self, service: &str) -> f64 {
        let Some(m) = self.last_metrics.get(service) else {
            return 0.0;
        };
        self.slos
            .get(service)
            .map(|slos| {
                slos.iter()
                    .filter(|s| evaluate_slo(s, m.value(s.metric)))
                    .map(|s| s.weight)
                    .sum()
            })
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawValue {
    pub value: f64,
    pub unit: String,
}

/// What one agent sees at step `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: u64,
    /// Id of the observing agent.
    pub scope: String,
    /// Bin index per scope variable.
    pub values: BTreeMap<String, usize>,
    /// Raw readings of the agent's own service.
    pub raw: BTreeMap<String, RawValue>,
}

impl Observation {
    pub fn value(&self, var: &str) -> Option<usize> {
        self.values.get(var).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    NotPermitted,
    WrongTarget,
    UnknownParam,
    InvalidLevel,
    ReplicaBounds,
    InsufficientCapacity,
    NodeUnavailable,
    UnknownNode,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rejection::NotPermitted => "not_permitted",
            Rejection::WrongTarget => "wrong_target",
            Rejection::UnknownParam => "unknown_param",
            Rejection::InvalidLevel => "invalid_level",
            Rejection::ReplicaBounds => "replica_bounds",
            Rejection::InsufficientCapacity => "insufficient_capacity",
            Rejection::NodeUnavailable => "node_unavailable",
            Rejection::UnknownNode => "unknown_node",
        };
        f.write_str(s)
    }
}

/// Result of one world step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observations: BTreeMap<String, Observation>,
    pub rejected: BTreeMap<String, Rejection>,
}

#[derive(Clone, Debug)]
pub struct World {
    scenario: Arc<Scenario>,
    state: WorldState,
    scopes: BTreeMap<String, ScopeSpec>,
    permitted: BTreeMap<String, Vec<ActionKind>>,
    churn_rng: SimRng,
    workload_rng: SimRng,
    noise_rng: SimRng,
}

impl World {
    /// Builds the world at `t = 0`, including the first workload draw and
    /// metrics, so agents have something to observe before acting.
    pub fn new(scenario: Arc<Scenario>) -> Result<Self, ScenarioError> {
        let seeds = SeedTree::new(scenario.seed);
        let topology = scenario.topology()?;
        let mut placements = BTreeMap::new();
        let mut configs = BTreeMap::new();
        let mut slos = BTreeMap::new();
        for s in scenario.services() {
            placements.insert(
                s.id.clone(),
                Placement {
                    node: s.node.clone(),
                    replicas: s.replicas,
                },
            );
            configs.insert(s.id.clone(), s.initial_levels());
            slos.insert(s.id.clone(), s.slos.clone());
        }
        let mut scopes = BTreeMap::new();
        let mut permitted = BTreeMap::new();
        for b in &scenario.bindings {
            scopes.insert(b.service.clone(), scenario.scope(&b.service)?);
            permitted.insert(b.service.clone(), scenario.permitted_actions(b)?);
        }
        let mut world = World {
            state: WorldState {
                t: 0,
                topology,
                placements,
                configs,
                slos,
                last_metrics: BTreeMap::new(),
                rates: BTreeMap::new(),
            },
            scenario,
            scopes,
            permitted,
            churn_rng: seeds.stream(rng::CHURN),
            workload_rng: seeds.stream(rng::WORKLOAD),
            noise_rng: seeds.stream(rng::NOISE),
        };
        world.regenerate_metrics();
        Ok(world)
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn scope(&self, agent: &str) -> Option<&ScopeSpec> {
        self.scopes.get(agent)
    }

    pub fn permitted(&self, agent: &str) -> &[ActionKind] {
        self.permitted.get(agent).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Mutable access for test set-ups.
    #[doc(hidden)]
    pub fn state_mut(&mut self) -> &mut WorldState {
        &mut self.state
    }

    /// Applies every scheduled SLO change for the current step and returns
    /// the affected services.
    pub fn apply_slo_schedule(&mut self) -> Vec<String> {
        let t = self.state.t;
        let mut changed = Vec::new();
        for ch in self.scenario.slo_schedule.iter().filter(|c| c.t == t) {
            self.state.slos.insert(ch.service.clone(), ch.slos.clone());
            changed.push(ch.service.clone());
        }
        changed
    }

    /// Advances one step. Invalid actions are rejected and reported; the
    /// world advances regardless.
    pub fn step(&mut self, actions: &BTreeMap<String, Action>) -> StepOutcome {
        let mut rejected = BTreeMap::new();
        // BTreeMap iteration is already agent-id order
        for (agent, action) in actions {
            if let Err(r) = self.apply_action(agent, action) {
                rejected.insert(agent.clone(), r);
            }
        }
        self.state.topology = self.state.topology.apply_churn(&mut self.churn_rng);
        self.state.t += 1;
        self.regenerate_metrics();
        StepOutcome {
            observations: self.observe_all(),
            rejected,
        }
    }

    fn apply_action(&mut self, agent: &str, action: &Action) -> Result<(), Rejection> {
        if action.issuer != agent {
            return Err(Rejection::NotPermitted);
        }
        let permitted = self.permitted.get(agent).ok_or(Rejection::NotPermitted)?;
        if !permitted.contains(&action.kind) {
            return Err(Rejection::NotPermitted);
        }
        let service = self.scopes.get(agent).map(|s| s.service.as_str()).ok_or(Rejection::NotPermitted)?;
        if action.target != service {
            return Err(Rejection::WrongTarget);
        }
        let spec = self.scenario.service(service).ok_or(Rejection::WrongTarget)?;
        match &action.kind {
            ActionKind::NoOp => Ok(()),
            ActionKind::Scale(delta) => {
                let p = &self.state.placements[service];
                let next = i64::from(p.replicas) + i64::from(*delta);
                if next < i64::from(spec.min_replicas) || next > i64::from(spec.max_replicas) {
                    return Err(Rejection::ReplicaBounds);
                }
                if *delta > 0 {
                    if !self.state.topology.is_available(&p.node).unwrap_or(false) {
                        return Err(Rejection::NodeUnavailable);
                    }
                    if self.reserved_on(&p.node, None) + spec.replica_capacity
                        > self.node_capacity(&p.node) + 1e-9
                    {
                        return Err(Rejection::InsufficientCapacity);
                    }
                }
                self.state.placements.get_mut(service).unwrap().replicas = next as u32;
                Ok(())
            }
            ActionKind::SetParam { name, level } => {
                let (i, p) = spec.param(name).ok_or(Rejection::UnknownParam)?;
                if *level >= p.levels.len() {
                    return Err(Rejection::InvalidLevel);
                }
                self.state.configs.get_mut(service).unwrap()[i] = *level;
                Ok(())
            }
            ActionKind::Migrate { node } => {
                let available = self
                    .state
                    .topology
                    .is_available(node)
                    .map_err(|_| Rejection::UnknownNode)?;
                if !available {
                    return Err(Rejection::NodeUnavailable);
                }
                let p = &self.state.placements[service];
                if &p.node == node {
                    return Ok(());
                }
                let needed = f64::from(p.replicas) * spec.replica_capacity;
                if self.reserved_on(node, Some(service)) + needed > self.node_capacity(node) + 1e-9 {
                    return Err(Rejection::InsufficientCapacity);
                }
                self.state.placements.get_mut(service).unwrap().node = node.clone();
                Ok(())
            }
        }
    }

    fn node_capacity(&self, node: &str) -> f64 {
        self.state
            .topology
            .node(node)
            .map(|n| n.spec.cpu_capacity)
            .unwrap_or(0.0)
    }

    /// Compute units reserved by replicas on `node`, optionally skipping one
    /// service.
    fn reserved_on(&self, node: &str, skip: Option<&str>) -> f64 {
        self.state
            .placements
            .iter()
            .filter(|(s, p)| p.node == node && Some(s.as_str()) != skip)
            .map(|(s, p)| {
                let cap = self.scenario.service(s).map(|x| x.replica_capacity).unwrap_or(0.0);
                f64::from(p.replicas) * cap
            })
            .sum()
    }

    /// Draws the workload for the current step and recomputes every
    /// service's metrics. Consumes one workload draw per application and one
    /// noise draw per service, in fixed order.
    fn regenerate_metrics(&mut self) {
        let sc = Arc::clone(&self.scenario);
        let t = self.state.t;
        self.state.rates = sc
            .applications
            .iter()
            .map(|a| (a.id.clone(), workload_rate(&a.workload, t, &mut self.workload_rng)))
            .collect();

        struct Pending {
            load: f64,
            multiplier: f64,
            placed: bool,
        }
        let mut pending = BTreeMap::new();
        let mut per_replica_demand = BTreeMap::new();
        let mut placed_placements = BTreeMap::new();
        for app in &sc.applications {
            let rate = self.state.rates[&app.id];
            for s in &app.services {
                let multiplier = self.input_multiplier(s);
                let load = rate * s.load_factor;
                let placed = self.state.is_placed(&s.id);
                let p = &self.state.placements[&s.id];
                if placed {
                    let demand = s.demand(&self.state.configs[&s.id], multiplier);
                    per_replica_demand.insert(s.id.clone(), load * demand / f64::from(p.replicas));
                    placed_placements.insert(s.id.clone(), p.clone());
                }
                pending.insert(
                    s.id.clone(),
                    Pending {
                        load,
                        multiplier,
                        placed,
                    },
                );
            }
        }
        let utilization = self
            .state
            .topology
            .host_utilization(&placed_placements, &per_replica_demand)
            .expect("placements reference known nodes");

        let mut metrics: BTreeMap<String, ServiceMetrics> = BTreeMap::new();
        for id in sc.service_order() {
            let spec = sc.service(&id).expect("ordered ids exist");
            let info = &pending[&id];
            let placement = &self.state.placements[&id];
            let host = self
                .state
                .topology
                .node(&placement.node)
                .expect("placement node exists");
            let host_util = utilization[&placement.node];

            // slowest upstream path, including the hop to this service
            let mut upstream_latency = 0.0;
            let mut link_latency = 0.0;
            let mut worst = 0.0;
            for up in &spec.upstream {
                let up_lat = metrics[up].latency_ms;
                let up_node = &self.state.placements[up].node;
                let hop = match self.state.topology.route(up_node, &placement.node) {
                    Ok(Some(r)) => r.latency_ms + sc.model.transfer_ms(spec.payload_kb, r.bottleneck_mbps),
                    _ => f64::INFINITY,
                };
                if up_lat + hop > worst || worst == 0.0 {
                    worst = up_lat + hop;
                    upstream_latency = up_lat;
                    link_latency = hop;
                }
            }
            let levels = &self.state.configs[&id];
            let load = ServiceLoad {
                spec,
                levels,
                input_multiplier: info.multiplier,
                load_rps: info.load,
                host: &host.spec,
                host_utilization: host_util,
                upstream_latency_ms: upstream_latency,
                link_latency_ms: link_latency,
                replicas: if info.placed { placement.replicas } else { 0 },
            };
            let latency = sc.model.latency(&load, &mut self.noise_rng);
            metrics.insert(
                id.clone(),
                ServiceMetrics {
                    load_rps: info.load,
                    latency_ms: latency,
                    throughput_rps: sc.model.throughput(&load),
                    energy_j: sc.model.energy(&load),
                    quality_level: spec.quality_level(levels),
                    replicas: placement.replicas,
                    utilization: host_util,
                    placed: info.placed,
                },
            );
        }
        self.state.last_metrics = metrics;
    }

    fn input_multiplier(&self, spec: &crate::services::ServiceSpec) -> f64 {
        spec.input_factors
            .iter()
            .map(|f| {
                let up = self.scenario.service(&f.upstream).expect("validated upstream");
                let (i, _) = up.param(&f.param).expect("validated param");
                f.factors[self.state.configs[&f.upstream][i]]
            })
            .product()
    }

    /// Scoped observation for one agent.
    pub fn observe(&self, agent: &str) -> Option<Observation> {
        let scope = self.scopes.get(agent)?;
        let m = self.state.last_metrics.get(&scope.service)?;
        let flags: BTreeMap<String, bool> = self.state.slo_flags(&scope.service).into_iter().collect();
        let levels = &self.state.configs[&scope.service];
        let mut values = BTreeMap::new();
        for v in &scope.vars {
            let bin = |x: f64| discretize(x, v.cuts.as_deref().unwrap_or(&[]));
            let value = match &v.source {
                crate::scenario::Source::Load => bin(m.load_rps),
                Source::Replicas => bin(f64::from(m.replicas)),
                Source::Param(i) => levels[*i],
                Source::Metric(metric) => bin(m.value(*metric)),
                Source::SloFlag(id) => usize::from(!flags.get(id).copied().unwrap_or(false)),
            };
            values.insert(v.name.clone(), value);
        }
        let mut raw = BTreeMap::new();
        raw.insert(
            "load_rps".to_string(),
            RawValue {
                value: m.load_rps,
                unit: "rps".into(),
            },
        );
        raw.insert(
            "replicas".to_string(),
            RawValue {
                value: f64::from(m.replicas),
                unit: "count".into(),
            },
        );
        for metric in Metric::ALL {
            raw.insert(
                metric.name().to_string(),
                RawValue {
                    value: m.value(metric),
                    unit: metric.unit().into(),
                },
            );
        }
        Some(Observation {
            t: self.state.t,
            scope: agent.to_string(),
            values,
            raw,
        })
    }

    pub fn observe_all(&self) -> BTreeMap<String, Observation> {
        self.scopes
            .keys()
            .filter_map(|a| self.observe(a).map(|o| (a.clone(), o)))
            .collect()
    }

    /// Weighted SLO fulfillment `agent`'s service would reach next step if it
    /// issued `kind` and every other agent did nothing. Runs on a clone, so
    /// the true random draws of the next step are used.
    pub fn lookahead_score(&self, agent: &str, kind: &ActionKind) -> f64 {
        let Some(service) = self.scopes.get(agent).map(|s| s.service.clone()) else {
            return 0.0;
        };
        let mut probe = self.clone();
        let actions = BTreeMap::from([(
            agent.to_string(),
            Action::new(agent, service.clone(), kind.clone()),
        )]);
        probe.step(&actions);
        probe.apply_slo_schedule();
        probe.state.weighted_fulfillment(&service)
    }
}

impl Lookahead for World {
    fn score(&self, agent: &str, kind: &ActionKind) -> f64 {
        self.lookahead_score(agent, kind)
    }
}

#[cfg(test)]
mod tests;
