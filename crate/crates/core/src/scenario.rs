//! Scenario documents: TOML text with `format_version = 1`.
//!
//! A scenario names the infrastructure, the applications with their service
//! pipelines, SLOs and workload, an optional SLO reconfiguration schedule,
//! and one agent binding per service. See `docs/formats.md` for the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AifParams;
use crate::bayesnet::equal_width_cuts;
use crate::error::ScenarioError;
use crate::infrastructure::{LinkSpec, NodeSpec, Topology};
use crate::services::{ActionKind, LatencyModel, Metric, ServiceSpec, Slo, WorkloadSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub model: LatencyModel,
    #[serde(default)]
    pub coordination: CoordinationSpec,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    pub applications: Vec<ApplicationSpec>,
    #[serde(default)]
    pub slo_schedule: Vec<SloChange>,
    pub bindings: Vec<AgentBinding>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinationSpec {
    /// Whether agents exchange coordination summaries each step.
    #[serde(default)]
    pub exchange: bool,
    /// Extra identified variable pairs beyond the ones implied by
    /// upstream input factors.
    #[serde(default)]
    pub identifications: Vec<IdentifiedPair>,
}

/// `owner.variable` is the same quantity as `other.variable`; the first
/// side owns the shared table.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifiedPair {
    pub owner: String,
    pub owner_var: String,
    pub other: String,
    pub other_var: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationSpec {
    pub id: String,
    pub workload: WorkloadSpec,
    pub services: Vec<ServiceSpec>,
}

/// Replaces a service's SLO set at the start of step `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloChange {
    pub t: u64,
    pub service: String,
    pub slos: Vec<Slo>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Aif,
    Random,
    Static,
    Threshold,
    OracleGreedy,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Aif => "aif",
            AgentKind::Random => "random",
            AgentKind::Static => "static",
            AgentKind::Threshold => "threshold",
            AgentKind::OracleGreedy => "oracle_greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "aif" => Some(AgentKind::Aif),
            "random" => Some(AgentKind::Random),
            "static" => Some(AgentKind::Static),
            "threshold" => Some(AgentKind::Threshold),
            "oracle_greedy" | "oracle" => Some(AgentKind::OracleGreedy),
            _ => None,
        }
    }
}

/// Rule for the threshold baseline: when `slo` is violated, issue `action`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRule {
    pub slo: String,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentBinding {
    pub service: String,
    #[serde(default)]
    pub agent: AgentKind,
    #[serde(default = "one_u64")]
    pub act_every_k: u64,
    /// Permitted actions; empty means noop, scale +/-1 and every param level.
    #[serde(default)]
    pub actions: Vec<String>,
    #[serde(default)]
    pub aif: AifParams,
    /// Explicit cut points per scope variable.
    #[serde(default)]
    pub binning: BTreeMap<String, Vec<f64>>,
    /// Ranges for 4-bin equal-width binning per scope variable.
    #[serde(default)]
    pub ranges: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub rules: Vec<ThresholdRule>,
}

fn one_u64() -> u64 {
    1
}

impl AgentBinding {
    pub fn new(service: impl Into<String>, agent: AgentKind) -> Self {
        Self {
            service: service.into(),
            agent,
            act_every_k: 1,
            actions: Vec::new(),
            aif: AifParams::default(),
            binning: BTreeMap::new(),
            ranges: BTreeMap::new(),
            rules: Vec::new(),
        }
    }
}

/// Where a scope variable's value comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Load,
    Replicas,
    Param(usize),
    Metric(Metric),
    SloFlag(String),
}

/// One observable variable of an agent's scope.
#[derive(Clone, Debug, PartialEq)]
pub struct ScopeVar {
    pub name: String,
    pub source: Source,
    pub cardinality: usize,
    pub cuts: Option<Vec<f64>>,
}

/// What an agent is allowed to observe: its own service's load,
/// configuration, SLO metrics and SLO flags, nothing else.
#[derive(Clone, Debug, PartialEq)]
pub struct ScopeSpec {
    pub agent: String,
    pub service: String,
    pub vars: Vec<ScopeVar>,
}

impl ScopeSpec {
    pub fn names(&self) -> BTreeSet<&str> {
        self.vars.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ScopeVar> {
        self.vars.iter().find(|v| v.name == name)
    }
}

pub const LOAD_VAR: &str = "load";
pub const REPLICAS_VAR: &str = "replicas";
const DEFAULT_BINS: usize = 4;
const DEFAULT_REPLICA_CUTS: [f64; 3] = [1.0, 2.0, 3.0];

pub fn slo_var(slo_id: &str) -> String {
    format!("slo_{slo_id}")
}

/// Variable through which an SLO's metric is observed.
pub fn metric_var(spec: &ServiceSpec, metric: Metric) -> String {
    match metric {
        Metric::QualityLevel => spec.quality_param.clone().unwrap_or_default(),
        m => m.name().to_string(),
    }
}

/// Parses a scenario document and validates every cross-reference.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_toml(text)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let mut sc: Scenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            ScenarioError::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        sc.normalize();
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Fills service ids into nested SLOs.
    fn normalize(&mut self) {
        for app in &mut self.applications {
            for s in &mut app.services {
                for slo in &mut s.slos {
                    if slo.service.is_empty() {
                        slo.service = s.id.clone();
                    }
                }
            }
        }
        for ch in &mut self.slo_schedule {
            for slo in &mut ch.slos {
                if slo.service.is_empty() {
                    slo.service = ch.service.clone();
                }
            }
        }
    }

    pub fn topology(&self) -> Result<Topology, ScenarioError> {
        Ok(Topology::new(self.nodes.clone(), self.links.clone())?)
    }

    pub fn services(&self) -> impl Iterator<Item = &ServiceSpec> {
        self.applications.iter().flat_map(|a| a.services.iter())
    }

    pub fn service(&self, id: &str) -> Option<&ServiceSpec> {
        self.services().find(|s| s.id == id)
    }

    pub fn application_of(&self, service: &str) -> Option<&ApplicationSpec> {
        self.applications
            .iter()
            .find(|a| a.services.iter().any(|s| s.id == service))
    }

    pub fn binding(&self, service: &str) -> Option<&AgentBinding> {
        self.bindings.iter().find(|b| b.service == service)
    }

    /// Agent ids in the deterministic order used for stepping.
    pub fn agent_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.bindings.iter().map(|b| b.service.clone()).collect();
        ids.sort();
        ids
    }

    /// Service ids with every upstream before its dependents; ties by id.
    pub fn service_order(&self) -> Vec<String> {
        let ids: Vec<&ServiceSpec> = self.services().collect();
        let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let parents: Vec<Vec<usize>> = ids
            .iter()
            .map(|s| s.upstream.iter().filter_map(|u| pos.get(u.as_str()).copied()).collect())
            .collect();
        let mut order = Vec::new();
        let mut done = vec![false; ids.len()];
        while order.len() < ids.len() {
            let next = (0..ids.len())
                .filter(|&i| !done[i] && parents[i].iter().all(|&p| done[p]))
                .min_by(|&a, &b| ids[a].id.cmp(&ids[b].id));
            match next {
                Some(i) => {
                    done[i] = true;
                    order.push(ids[i].id.clone());
                }
                None => break,
            }
        }
        order
    }

    /// Services that list `service` as upstream.
    pub fn downstream_of(&self, service: &str) -> Vec<&ServiceSpec> {
        self.services()
            .filter(|s| s.upstream.iter().any(|u| u == service))
            .collect()
    }

    /// Permitted action kinds for a binding, in tie-break order.
    pub fn permitted_actions(&self, binding: &AgentBinding) -> Result<Vec<ActionKind>, ScenarioError> {
        let spec = self.service(&binding.service).ok_or_else(|| ScenarioError::Dangling {
            kind: "service",
            id: binding.service.clone(),
            context: "binding".into(),
        })?;
        let mut out = if binding.actions.is_empty() {
            let mut v = vec![ActionKind::NoOp, ActionKind::Scale(1), ActionKind::Scale(-1)];
            for p in &spec.params {
                for level in 0..p.levels.len() {
                    v.push(ActionKind::SetParam {
                        name: p.name.clone(),
                        level,
                    });
                }
            }
            v
        } else {
            binding
                .actions
                .iter()
                .map(|a| self.resolve_action(spec, a))
                .collect::<Result<Vec<_>, _>>()?
        };
        out.sort();
        out.dedup();
        if !out.contains(&ActionKind::NoOp) {
            out.insert(0, ActionKind::NoOp);
        }
        Ok(out)
    }

    /// Parses an action string, accepting level names in `set:` actions.
    pub fn resolve_action(&self, spec: &ServiceSpec, text: &str) -> Result<ActionKind, ScenarioError> {
        let field = format!("bindings.{}.actions", spec.id);
        let kind = match text.trim().strip_prefix("set:").and_then(|r| r.split_once('=')) {
            Some((name, level)) => {
                let (_, p) = spec
                    .param(name)
                    .ok_or_else(|| ScenarioError::invalid(&field, format!("unknown param `{name}`")))?;
                let level = p
                    .level_index(level)
                    .or_else(|| level.parse().ok().filter(|&l: &usize| l < p.levels.len()))
                    .ok_or_else(|| ScenarioError::invalid(&field, format!("unknown level in `{text}`")))?;
                ActionKind::SetParam {
                    name: name.to_string(),
                    level,
                }
            }
            None => text.parse().map_err(|e: String| ScenarioError::invalid(&field, e))?,
        };
        if let ActionKind::Migrate { node } = &kind {
            if !self.nodes.iter().any(|n| &n.id == node) {
                return Err(ScenarioError::Dangling {
                    kind: "node",
                    id: node.clone(),
                    context: field,
                });
            }
        }
        Ok(kind)
    }

    /// Resolves the observation scope of the agent bound to `service`.
    pub fn scope(&self, service: &str) -> Result<ScopeSpec, ScenarioError> {
        let spec = self.service(service).ok_or_else(|| ScenarioError::Dangling {
            kind: "service",
            id: service.to_string(),
            context: "scope".into(),
        })?;
        let binding = self.binding(service).ok_or_else(|| ScenarioError::Dangling {
            kind: "binding",
            id: service.to_string(),
            context: "scope".into(),
        })?;
        let app = self.application_of(service).expect("service belongs to an application");

        let cuts_for = |name: &str, default_range: [f64; 2]| -> Result<Vec<f64>, ScenarioError> {
            let cuts = match (binding.binning.get(name), binding.ranges.get(name)) {
                (Some(c), _) => c.clone(),
                (None, Some(r)) => equal_width_cuts(r[0], r[1], DEFAULT_BINS),
                (None, None) => equal_width_cuts(default_range[0], default_range[1], DEFAULT_BINS),
            };
            if cuts.is_empty()
                || cuts.windows(2).any(|w| !(w[0] < w[1]))
                || cuts.iter().any(|c| !c.is_finite())
            {
                return Err(ScenarioError::invalid(
                    format!("bindings.{service}.binning.{name}"),
                    "cut points must be finite and strictly increasing",
                ));
            }
            Ok(cuts)
        };

        let mut vars = Vec::new();
        let peak = app.workload.base_rate * (1.0 + app.workload.diurnal_amplitude.abs()) * spec.load_factor;
        let load_cuts = cuts_for(LOAD_VAR, [0.0, (1.25 * peak).max(1.0)])?;
        vars.push(ScopeVar {
            name: LOAD_VAR.into(),
            source: Source::Load,
            cardinality: load_cuts.len() + 1,
            cuts: Some(load_cuts),
        });
        for (i, p) in spec.params.iter().enumerate() {
            vars.push(ScopeVar {
                name: p.name.clone(),
                source: Source::Param(i),
                cardinality: p.levels.len(),
                cuts: None,
            });
        }
        let replica_cuts = binding
            .binning
            .get(REPLICAS_VAR)
            .cloned()
            .unwrap_or_else(|| DEFAULT_REPLICA_CUTS.to_vec());
        vars.push(ScopeVar {
            name: REPLICAS_VAR.into(),
            source: Source::Replicas,
            cardinality: replica_cuts.len() + 1,
            cuts: Some(replica_cuts),
        });

        let mut metrics: BTreeMap<Metric, Vec<f64>> = BTreeMap::new();
        let all_slos = spec
            .slos
            .iter()
            .chain(self.slo_schedule.iter().filter(|c| c.service == service).flat_map(|c| &c.slos));
        for slo in all_slos {
            if slo.metric != Metric::QualityLevel {
                metrics.entry(slo.metric).or_default().push(slo.threshold);
            }
        }
        for (m, thresholds) in metrics {
            let top = thresholds.iter().fold(0.0f64, |a, t| a.max(t.abs()));
            let explicit = binding.binning.contains_key(m.name()) || binding.ranges.contains_key(m.name());
            let mut cuts = cuts_for(m.name(), [0.0, (2.0 * top).max(1e-9)])?;
            if !explicit {
                // every threshold, including scheduled ones, lands on a cut
                cuts.extend(thresholds.iter().filter(|t| t.is_finite()));
                cuts.sort_by(f64::total_cmp);
                cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            }
            vars.push(ScopeVar {
                name: m.name().into(),
                source: Source::Metric(m),
                cardinality: cuts.len() + 1,
                cuts: Some(cuts),
            });
        }
        for slo in &spec.slos {
            vars.push(ScopeVar {
                name: slo_var(&slo.id),
                source: Source::SloFlag(slo.id.clone()),
                cardinality: 2,
                cuts: None,
            });
        }
        Ok(ScopeSpec {
            agent: binding.service.clone(),
            service: service.to_string(),
            vars,
        })
    }

    /// Identified variable pairs: one per upstream input factor plus the
    /// declared extras.
    pub fn identifications(&self) -> Vec<IdentifiedPair> {
        let mut out = Vec::new();
        for s in self.services() {
            for f in &s.input_factors {
                out.push(IdentifiedPair {
                    owner: f.upstream.clone(),
                    owner_var: f.param.clone(),
                    other: s.id.clone(),
                    other_var: input_var(&f.upstream, &f.param),
                });
            }
        }
        out.extend(self.coordination.identifications.iter().cloned());
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ScenarioError::Version(self.format_version));
        }
        if self.horizon < 1 {
            return Err(ScenarioError::Horizon);
        }
        self.topology()?;
        let node_ids: BTreeSet<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();

        let mut app_ids = BTreeSet::new();
        let mut service_ids = BTreeSet::new();
        let mut slo_ids = BTreeSet::new();
        for app in &self.applications {
            if !app_ids.insert(app.id.as_str()) {
                return Err(ScenarioError::invalid("applications.id", format!("duplicate `{}`", app.id)));
            }
            validate_workload(&app.id, &app.workload)?;
            if app.services.is_empty() {
                return Err(ScenarioError::invalid(
                    format!("applications.{}.services", app.id),
                    "at least one service required",
                ));
            }
            for s in &app.services {
                if !service_ids.insert(s.id.as_str()) {
                    return Err(ScenarioError::invalid("services.id", format!("duplicate `{}`", s.id)));
                }
                for slo in &s.slos {
                    if !slo_ids.insert(slo.id.as_str()) {
                        return Err(ScenarioError::invalid("slos.id", format!("duplicate `{}`", slo.id)));
                    }
                }
            }
        }
        for s in self.services() {
            if !node_ids.contains(s.node.as_str()) {
                return Err(ScenarioError::Dangling {
                    kind: "node",
                    id: s.node.clone(),
                    context: format!("service `{}`", s.id),
                });
            }
            for u in &s.upstream {
                if !service_ids.contains(u.as_str()) {
                    return Err(ScenarioError::Dangling {
                        kind: "service",
                        id: u.clone(),
                        context: format!("upstream of `{}`", s.id),
                    });
                }
            }
            validate_service(self, s)?;
        }
        if self.service_order().len() != service_ids.len() {
            return Err(ScenarioError::invalid("services.upstream", "upstream edges contain a cycle"));
        }

        for ch in &self.slo_schedule {
            let spec = self.service(&ch.service).ok_or_else(|| ScenarioError::Dangling {
                kind: "service",
                id: ch.service.clone(),
                context: format!("slo_schedule at t={}", ch.t),
            })?;
            if ch.t >= self.horizon {
                return Err(ScenarioError::invalid(
                    "slo_schedule.t",
                    format!("t={} outside horizon {}", ch.t, self.horizon),
                ));
            }
            let before: BTreeSet<&str> = spec.slos.iter().map(|s| s.id.as_str()).collect();
            let after: BTreeSet<&str> = ch.slos.iter().map(|s| s.id.as_str()).collect();
            if before != after || after.len() != ch.slos.len() {
                return Err(ScenarioError::invalid(
                    "slo_schedule.slos",
                    format!("change for `{}` must redefine exactly its SLO ids", ch.service),
                ));
            }
            for slo in &ch.slos {
                validate_slo(spec, slo)?;
            }
        }

        let mut bound = BTreeSet::new();
        for b in &self.bindings {
            let spec = self.service(&b.service).ok_or_else(|| ScenarioError::Dangling {
                kind: "service",
                id: b.service.clone(),
                context: "bindings".into(),
            })?;
            if !bound.insert(b.service.as_str()) {
                return Err(ScenarioError::invalid("bindings.service", format!("duplicate `{}`", b.service)));
            }
            if b.act_every_k < 1 {
                return Err(ScenarioError::invalid(
                    format!("bindings.{}.act_every_k", b.service),
                    "must be >= 1",
                ));
            }
            b.aif
                .validate()
                .map_err(|r| ScenarioError::invalid(format!("bindings.{}.aif", b.service), r))?;
            self.permitted_actions(b)?;
            for rule in &b.rules {
                if !spec.slos.iter().any(|s| s.id == rule.slo) {
                    return Err(ScenarioError::Dangling {
                        kind: "slo",
                        id: rule.slo.clone(),
                        context: format!("threshold rule of `{}`", b.service),
                    });
                }
                self.resolve_action(spec, &rule.action)?;
            }
            self.scope(&b.service)?;
        }
        if let Some(unbound) = service_ids.iter().find(|s| !bound.contains(*s)) {
            return Err(ScenarioError::invalid(
                "bindings",
                format!("service `{unbound}` has no agent binding"),
            ));
        }
        for pair in &self.coordination.identifications {
            for agent in [&pair.owner, &pair.other] {
                if !bound.contains(agent.as_str()) {
                    return Err(ScenarioError::Dangling {
                        kind: "agent",
                        id: agent.clone(),
                        context: "coordination.identifications".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Name of the boundary variable through which a downstream agent sees an
/// upstream parameter.
pub fn input_var(upstream: &str, param: &str) -> String {
    format!("in_{upstream}_{param}")
}

/// Name of the neighbour-constraint variable tracking another service's SLO.
pub fn neighbor_var(service: &str, slo_id: &str) -> String {
    format!("nb_{service}_{slo_id}")
}

fn validate_workload(app: &str, w: &WorkloadSpec) -> Result<(), ScenarioError> {
    let field = |f: &str| format!("applications.{app}.workload.{f}");
    if !(w.base_rate >= 0.0) || !w.base_rate.is_finite() {
        return Err(ScenarioError::invalid(field("base_rate"), "must be finite and >= 0"));
    }
    if w.period < 1 {
        return Err(ScenarioError::invalid(field("period"), "must be >= 1"));
    }
    if !(w.noise_sd >= 0.0) {
        return Err(ScenarioError::invalid(field("noise_sd"), "must be >= 0"));
    }
    if !w.diurnal_amplitude.is_finite() || !w.drift_per_step.is_finite() {
        return Err(ScenarioError::invalid(field("diurnal_amplitude"), "must be finite"));
    }
    Ok(())
}

fn validate_service(sc: &Scenario, s: &ServiceSpec) -> Result<(), ScenarioError> {
    let field = |f: &str| format!("services.{}.{f}", s.id);
    if !(s.demand_per_request > 0.0) || !s.demand_per_request.is_finite() {
        return Err(ScenarioError::invalid(field("demand_per_request"), "must be finite and > 0"));
    }
    if !(s.base_latency_ms >= 0.0) || !s.base_latency_ms.is_finite() {
        return Err(ScenarioError::invalid(field("base_latency_ms"), "must be finite and >= 0"));
    }
    if !(s.replica_capacity > 0.0) || !s.replica_capacity.is_finite() {
        return Err(ScenarioError::invalid(field("replica_capacity"), "must be finite and > 0"));
    }
    if !(s.load_factor >= 0.0) || !(s.payload_kb >= 0.0) {
        return Err(ScenarioError::invalid(field("load_factor"), "must be >= 0"));
    }
    if s.min_replicas > s.max_replicas || s.replicas < s.min_replicas || s.replicas > s.max_replicas {
        return Err(ScenarioError::invalid(
            field("replicas"),
            "need min_replicas <= replicas <= max_replicas",
        ));
    }
    let mut names = BTreeSet::new();
    for p in &s.params {
        let pf = |f: &str| format!("services.{}.params.{}.{f}", s.id, p.name);
        if [LOAD_VAR, REPLICAS_VAR, "action"].contains(&p.name.as_str())
            || Metric::ALL.iter().any(|m| m.name() == p.name)
            || p.name.starts_with("prev_")
            || !names.insert(p.name.as_str())
        {
            return Err(ScenarioError::invalid(pf("name"), "reserved or duplicate parameter name"));
        }
        if p.levels.len() < 2 {
            return Err(ScenarioError::invalid(pf("levels"), "need at least 2 levels"));
        }
        if p.demand_factors.len() != p.levels.len() || p.latency_factors.len() != p.levels.len() {
            return Err(ScenarioError::invalid(pf("demand_factors"), "need one factor per level"));
        }
        if p.demand_factors.windows(2).any(|w| !(w[0] < w[1])) || p.demand_factors.iter().any(|f| !(*f > 0.0)) {
            return Err(ScenarioError::invalid(
                pf("demand_factors"),
                "must be positive and strictly increasing with level",
            ));
        }
        if p.latency_factors.windows(2).any(|w| !(w[0] <= w[1])) || p.latency_factors.iter().any(|f| !(*f > 0.0)) {
            return Err(ScenarioError::invalid(
                pf("latency_factors"),
                "must be positive and nondecreasing with level",
            ));
        }
        if let Some(init) = &p.initial {
            if p.level_index(init).is_none() {
                return Err(ScenarioError::invalid(pf("initial"), format!("unknown level `{init}`")));
            }
        }
    }
    if let Some(q) = &s.quality_param {
        if s.param(q).is_none() {
            return Err(ScenarioError::invalid(field("quality_param"), format!("unknown param `{q}`")));
        }
    }
    for f in &s.input_factors {
        if !s.upstream.contains(&f.upstream) {
            return Err(ScenarioError::invalid(
                field("input_factors"),
                format!("`{}` is not an upstream of `{}`", f.upstream, s.id),
            ));
        }
        let up = sc.service(&f.upstream).expect("upstream checked");
        let (_, p) = up.param(&f.param).ok_or_else(|| ScenarioError::Dangling {
            kind: "param",
            id: f.param.clone(),
            context: format!("input factor of `{}`", s.id),
        })?;
        if f.factors.len() != p.levels.len() || f.factors.iter().any(|x| !(*x > 0.0)) {
            return Err(ScenarioError::invalid(
                field("input_factors"),
                "need one positive factor per upstream level",
            ));
        }
    }
    if s.slos.is_empty() {
        return Err(ScenarioError::invalid(field("slos"), "every service needs at least one SLO"));
    }
    for slo in &s.slos {
        validate_slo(s, slo)?;
    }
    Ok(())
}

fn validate_slo(s: &ServiceSpec, slo: &Slo) -> Result<(), ScenarioError> {
    let field = format!("slos.{}", slo.id);
    if slo.service != s.id {
        return Err(ScenarioError::invalid(&field, format!("belongs to `{}`, not `{}`", slo.service, s.id)));
    }
    if !slo.threshold.is_finite() {
        return Err(ScenarioError::invalid(&field, "threshold must be finite"));
    }
    if !(slo.weight > 0.0) || !slo.weight.is_finite() {
        return Err(ScenarioError::invalid(&field, "weight must be finite and > 0"));
    }
    if let Some(unit) = &slo.unit {
        if unit != slo.metric.unit() {
            return Err(ScenarioError::invalid(
                &field,
                format!("unit `{unit}` does not match {} ({})", slo.metric, slo.metric.unit()),
            ));
        }
    }
    if slo.metric == Metric::QualityLevel && s.quality_param.is_none() {
        return Err(ScenarioError::invalid(&field, "quality_level SLO needs a quality_param"));
    }
    Ok(())
}
