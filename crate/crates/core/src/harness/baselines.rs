//! Reference policies the Active Inference agent is compared against.

use rand::Rng;

use crate::agent::AifAgent;
use crate::error::ScenarioError;
use crate::scenario::{slo_var, AgentKind, Scenario};
use crate::services::{ActionKind, Comparator, Metric, ServiceSpec, Slo};
use crate::sim::{ActContext, Agent, AgentError, Observation};

/// Never changes anything.
pub struct StaticAgent {
    id: String,
}

impl StaticAgent {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Agent for StaticAgent {
    fn id(&self) -> &str {
        &self.id
    }
    fn service(&self) -> &str {
        &self.id
    }
    fn observe(&mut self, _obs: &Observation) {}
    fn act(&mut self, _ctx: &mut ActContext<'_>) -> Result<ActionKind, AgentError> {
        Ok(ActionKind::NoOp)
    }
}

/// Uniform over the permitted actions on every acting step.
pub struct RandomAgent {
    id: String,
}

impl RandomAgent {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Agent for RandomAgent {
    fn id(&self) -> &str {
        &self.id
    }
    fn service(&self) -> &str {
        &self.id
    }
    fn observe(&mut self, _obs: &Observation) {}
    fn act(&mut self, ctx: &mut ActContext<'_>) -> Result<ActionKind, AgentError> {
        if !ctx.acting || ctx.permitted.is_empty() {
            return Ok(ActionKind::NoOp);
        }
        let i = ctx.rng.random_range(0..ctx.permitted.len());
        Ok(ctx.permitted[i].clone())
    }
}

/// Fires the first rule whose SLO is currently violated.
pub struct ThresholdAgent {
    id: String,
    rules: Vec<(String, ActionKind)>,
    /// Set when rules are derived from the SLOs and follow their changes.
    defaults: Option<ServiceSpec>,
    last: Option<Observation>,
}

impl ThresholdAgent {
    pub fn new(id: impl Into<String>, rules: Vec<(String, ActionKind)>) -> Self {
        Self {
            id: id.into(),
            rules,
            defaults: None,
            last: None,
        }
    }

    /// Rules from the binding, or defaults derived from the SLOs: add a
    /// replica for latency and throughput violations, drop one for energy
    /// violations and raise the quality parameter to the required level.
    pub fn from_scenario(sc: &Scenario, service: &str) -> Result<Self, ScenarioError> {
        let spec = sc.service(service).ok_or_else(|| ScenarioError::Dangling {
            kind: "service",
            id: service.to_string(),
            context: "threshold agent".into(),
        })?;
        let binding = sc.binding(service).ok_or_else(|| ScenarioError::Dangling {
            kind: "binding",
            id: service.to_string(),
            context: "threshold agent".into(),
        })?;
        let mut agent = Self::new(binding.service.clone(), Vec::new());
        if binding.rules.is_empty() {
            agent.defaults = Some(spec.clone());
            agent.rules = default_rules(spec, &spec.slos);
        } else {
            agent.rules = binding
                .rules
                .iter()
                .map(|r| Ok((r.slo.clone(), sc.resolve_action(spec, &r.action)?)))
                .collect::<Result<_, ScenarioError>>()?;
        }
        Ok(agent)
    }
}

fn default_rules(spec: &ServiceSpec, slos: &[Slo]) -> Vec<(String, ActionKind)> {
    slos.iter()
        .filter_map(|s| {
            let action = match (s.metric, s.comparator) {
                (Metric::LatencyMs, Comparator::AtMost) | (Metric::ThroughputRps, Comparator::AtLeast) => {
                    ActionKind::Scale(1)
                }
                (Metric::EnergyJ, Comparator::AtMost) => ActionKind::Scale(-1),
                (Metric::QualityLevel, Comparator::AtLeast) => {
                    let name = spec.quality_param.clone()?;
                    let (_, p) = spec.param(&name)?;
                    let level = (s.threshold.max(0.0).ceil() as usize).min(p.levels.len() - 1);
                    ActionKind::SetParam { name, level }
                }
                _ => return None,
            };
            Some((s.id.clone(), action))
        })
        .collect()
}

impl Agent for ThresholdAgent {
    fn id(&self) -> &str {
        &self.id
    }
    fn service(&self) -> &str {
        &self.id
    }
    fn observe(&mut self, obs: &Observation) {
        self.last = Some(obs.clone());
    }
    fn slos_changed(&mut self, slos: &[Slo]) {
        if let Some(spec) = &self.defaults {
            self.rules = default_rules(spec, slos);
        }
    }
    fn act(&mut self, ctx: &mut ActContext<'_>) -> Result<ActionKind, AgentError> {
        if !ctx.acting {
            return Ok(ActionKind::NoOp);
        }
        let Some(obs) = &self.last else {
            return Ok(ActionKind::NoOp);
        };
        for (slo, action) in &self.rules {
            if obs.value(&slo_var(slo)) == Some(1) {
                return Ok(action.clone());
            }
        }
        Ok(ActionKind::NoOp)
    }
}

/// Picks the action with the best true next-step outcome for its own
/// service. Ties go to the earliest action in action order.
pub struct OracleGreedyAgent {
    id: String,
}

impl OracleGreedyAgent {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Agent for OracleGreedyAgent {
    fn id(&self) -> &str {
        &self.id
    }
    fn service(&self) -> &str {
        &self.id
    }
    fn observe(&mut self, _obs: &Observation) {}
    fn act(&mut self, ctx: &mut ActContext<'_>) -> Result<ActionKind, AgentError> {
        if !ctx.acting {
            return Ok(ActionKind::NoOp);
        }
        let mut best: Option<(f64, &ActionKind)> = None;
        for kind in ctx.permitted {
            let score = ctx.lookahead.score(&self.id, kind);
            if best.is_none_or(|(b, _)| score > b + 1e-12) {
                best = Some((score, kind));
            }
        }
        Ok(best.map_or(ActionKind::NoOp, |(_, k)| k.clone()))
    }
}

/// Agent of `kind` for `service`.
pub fn make_agent(
    sc: &Scenario,
    service: &str,
    kind: AgentKind,
    exchange: bool,
) -> Result<Box<dyn Agent>, ScenarioError> {
    Ok(match kind {
        AgentKind::Aif => Box::new(AifAgent::from_scenario(sc, service, exchange)?),
        AgentKind::Random => Box::new(RandomAgent::new(service)),
        AgentKind::Static => Box::new(StaticAgent::new(service)),
        AgentKind::Threshold => Box::new(ThresholdAgent::from_scenario(sc, service)?),
        AgentKind::OracleGreedy => Box::new(OracleGreedyAgent::new(service)),
    })
}
