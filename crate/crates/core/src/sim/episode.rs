use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ServiceMetrics, World};
use crate::agent::EfeBreakdown;
use crate::composition::CoordinationSummary;
use crate::error::ScenarioError;
use crate::rng::{SeedTree, SimRng};
use crate::scenario::Scenario;
use crate::services::{Action, ActionKind, Slo};

use super::Observation;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message}")]
pub struct AgentError {
    pub message: String,
}

impl AgentError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// Access to the true next-step consequences of an action. Only the oracle
/// baseline uses it.
pub trait Lookahead {
    /// Weighted SLO fulfillment of `agent`'s service after one step in which
    /// `agent` issues `kind` and everyone else does nothing.
    fn score(&self, agent: &str, kind: &ActionKind) -> f64;
}

pub struct ActContext<'a> {
    pub t: u64,
    /// False on steps skipped by `act_every_k`; agents should issue `noop`.
    pub acting: bool,
    pub rng: &'a mut SimRng,
    pub permitted: &'a [ActionKind],
    pub lookahead: &'a dyn Lookahead,
}

/// A decision maker bound to one service.
pub trait Agent: Send {
    fn id(&self) -> &str;
    fn service(&self) -> &str;
    fn observe(&mut self, obs: &Observation);
    fn slos_changed(&mut self, _slos: &[Slo]) {}
    fn publish(&mut self, _t: u64) -> Option<CoordinationSummary> {
        None
    }
    fn incorporate(&mut self, _summaries: &[CoordinationSummary]) {}
    fn act(&mut self, ctx: &mut ActContext<'_>) -> Result<ActionKind, AgentError>;
    fn surprise(&self) -> Option<f64> {
        None
    }
    fn efe(&self) -> &[EfeBreakdown] {
        &[]
    }
    fn take_warnings(&mut self) -> Vec<String> {
        Vec::new()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    /// Exchange coordination summaries between agents each step.
    pub exchange: bool,
    /// Keep per-action expected free energy in the log.
    pub record_efe: bool,
    /// Measure wall-clock time per decision.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub agent: String,
    pub service: String,
    pub node: String,
    pub replicas: u32,
    pub placed: bool,
    pub action: ActionKind,
    pub rejected: Option<String>,
    pub error: Option<String>,
    /// `(slo id, fulfilled, weight)` at this step.
    pub slos: Vec<(String, bool, f64)>,
    pub surprise: Option<f64>,
    pub metrics: ServiceMetrics,
    pub efe: Vec<EfeBreakdown>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub available_nodes: usize,
    pub agents: Vec<AgentRecord>,
}

impl StepRecord {
    /// Weighted fraction of all SLOs fulfilled at this step.
    pub fn fulfillment(&self) -> f64 {
        let (mut ok, mut total) = (0.0, 0.0);
        for a in &self.agents {
            for (_, f, w) in &a.slos {
                total += w;
                if *f {
                    ok += w;
                }
            }
        }
        if total > 0.0 {
            ok / total
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub scenario: String,
    pub seed: u64,
    pub horizon: u64,
    pub agents: Vec<String>,
    pub records: Vec<StepRecord>,
    /// Wall-clock milliseconds per decision, per agent. Empty unless timing
    /// was requested.
    pub decision_ms: BTreeMap<String, Vec<f64>>,
}

impl EpisodeLog {
    pub fn fulfillment_series(&self) -> Vec<f64> {
        self.records.iter().map(StepRecord::fulfillment).collect()
    }

    /// Mean of the per-step weighted fulfillment.
    pub fn fulfillment_rate(&self) -> f64 {
        let s = self.fulfillment_series();
        if s.is_empty() {
            return 0.0;
        }
        s.iter().sum::<f64>() / s.len() as f64
    }

    pub fn errors(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| &r.agents)
            .filter(|a| a.error.is_some())
            .count()
    }
}

/// Runs one episode of `scenario.horizon` steps.
///
/// Per step: scheduled SLO changes, observation, optional summary exchange,
/// decisions in agent-id order, then the world step. An agent that fails is
/// replaced by `noop` for that step and the failure is logged.
pub fn run_episode(
    scenario: Arc<Scenario>,
    mut agents: Vec<Box<dyn Agent>>,
    opts: EpisodeOptions,
) -> Result<EpisodeLog, ScenarioError> {
    let mut world = World::new(Arc::clone(&scenario))?;
    agents.sort_by(|a, b| a.id().cmp(b.id()));
    let ids: BTreeSet<String> = agents.iter().map(|a| a.id().to_string()).collect();
    let expected: BTreeSet<String> = scenario.agent_ids().into_iter().collect();
    if ids != expected || ids.len() != agents.len() {
        return Err(ScenarioError::invalid(
            "agents",
            format!("need exactly one agent per binding {expected:?}, got {ids:?}"),
        ));
    }
    let seeds = SeedTree::new(scenario.seed);
    let mut rngs: Vec<SimRng> = agents.iter().map(|a| seeds.agent_stream(a.id())).collect();
    let cadence: Vec<u64> = agents
        .iter()
        .map(|a| scenario.binding(a.service()).map_or(1, |b| b.act_every_k.max(1)))
        .collect();
    let mut decision_ms: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut records = Vec::with_capacity(scenario.horizon as usize);

    for t in 0..scenario.horizon {
        for service in world.apply_slo_schedule() {
            let slos = world.state().slos[&service].clone();
            for a in agents.iter_mut().filter(|a| a.service() == service) {
                a.slos_changed(&slos);
            }
        }
        let observations = world.observe_all();
        let mut elapsed = vec![0.0; agents.len()];
        for (i, a) in agents.iter_mut().enumerate() {
            let start = Instant::now();
            if let Some(o) = observations.get(a.id()) {
                a.observe(o);
            }
            elapsed[i] += start.elapsed().as_secs_f64() * 1e3;
        }
        if opts.exchange {
            let mut summaries = Vec::new();
            for (i, a) in agents.iter_mut().enumerate() {
                let start = Instant::now();
                summaries.extend(a.publish(t));
                elapsed[i] += start.elapsed().as_secs_f64() * 1e3;
            }
            for (i, a) in agents.iter_mut().enumerate() {
                let start = Instant::now();
                let others: Vec<CoordinationSummary> =
                    summaries.iter().filter(|s| s.issuer != a.id()).cloned().collect();
                a.incorporate(&others);
                elapsed[i] += start.elapsed().as_secs_f64() * 1e3;
            }
        }

        let mut actions = BTreeMap::new();
        let mut errors = BTreeMap::new();
        for (i, a) in agents.iter_mut().enumerate() {
            let start = Instant::now();
            let mut ctx = ActContext {
                t,
                acting: t % cadence[i] == 0,
                rng: &mut rngs[i],
                permitted: world.permitted(a.id()),
                lookahead: &world,
            };
            let kind = match a.act(&mut ctx) {
                Ok(k) => k,
                Err(e) => {
                    errors.insert(a.id().to_string(), e.message);
                    ActionKind::NoOp
                }
            };
            elapsed[i] += start.elapsed().as_secs_f64() * 1e3;
            actions.insert(a.id().to_string(), Action::new(a.id(), a.service(), kind));
        }
        if opts.timing {
            for (a, ms) in agents.iter().zip(&elapsed) {
                decision_ms.entry(a.id().to_string()).or_default().push(*ms);
            }
        }

        let state = world.state();
        let mut agent_records = Vec::with_capacity(agents.len());
        for a in agents.iter_mut() {
            let service = a.service().to_string();
            let placement = &state.placements[&service];
            let slos: Vec<(String, bool, f64)> = state
                .slo_flags(&service)
                .into_iter()
                .zip(&state.slos[&service])
                .map(|((id, ok), s)| (id, ok, s.weight))
                .collect();
            agent_records.push(AgentRecord {
                agent: a.id().to_string(),
                node: placement.node.clone(),
                replicas: placement.replicas,
                placed: state.is_placed(&service),
                action: actions[a.id()].kind.clone(),
                rejected: None,
                error: errors.remove(a.id()),
                slos,
                surprise: a.surprise(),
                metrics: state.last_metrics[&service].clone(),
                efe: if opts.record_efe { a.efe().to_vec() } else { Vec::new() },
                warnings: a.take_warnings(),
                service,
            });
        }
        let available_nodes = state.topology.available_count();
        let outcome = world.step(&actions);
        for r in &mut agent_records {
            r.rejected = outcome.rejected.get(&r.agent).map(|x| x.to_string());
        }
        records.push(StepRecord {
            t,
            available_nodes,
            agents: agent_records,
        });
    }

    Ok(EpisodeLog {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        horizon: scenario.horizon,
        agents: agents.iter().map(|a| a.id().to_string()).collect(),
        records,
        decision_ms,
    })
}
