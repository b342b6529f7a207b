//! Generative model layout for one service agent.
//!
//! Roots: `load`, `prev_<x>` for every configuration variable, `action` and,
//! with summary exchange, `in_<upstream>_<param>` boundary variables. Each
//! configuration variable depends on its previous value and the action;
//! metrics depend on load, configuration and boundary variables; SLO
//! indicators depend on the metric they test.

use serde::{Deserialize, Serialize};

use crate::bayesnet::{BayesNet, VarRole, Variable, LAPLACE_PRIOR};
use crate::error::ScenarioError;
use crate::scenario::{input_var, metric_var, neighbor_var, slo_var, Scenario, Source, LOAD_VAR};
use crate::services::{evaluate_slo, ActionKind, Comparator, Slo};

pub const ACTION_VAR: &str = "action";

pub fn prev_var(name: &str) -> String {
    format!("prev_{name}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVar {
    pub name: String,
    pub prev: usize,
    pub cur: usize,
}

/// Indices of the roles each model variable plays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub load: usize,
    pub state: Vec<StateVar>,
    pub action: usize,
    pub boundary: Vec<usize>,
    pub metrics: Vec<usize>,
    pub indicators: Vec<(usize, Slo)>,
    /// Constraint variables tracking SLOs of downstream services.
    pub neighbors: Vec<(usize, Slo)>,
}

pub fn build_model(
    sc: &Scenario,
    service: &str,
    n_actions: usize,
    exchange: bool,
    confidence: f64,
) -> Result<(BayesNet, ModelLayout), ScenarioError> {
    let spec = sc.service(service).ok_or_else(|| ScenarioError::Dangling {
        kind: "service",
        id: service.to_string(),
        context: "agent model".into(),
    })?;
    let scope = sc.scope(service)?;
    let mut vars: Vec<Variable> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    let edge = |edges: &mut Vec<(String, String)>, p: &str, c: &str| edges.push((p.to_string(), c.to_string()));

    let scope_var = |name: &str, role: VarRole| {
        let v = scope.get(name).expect("scope variable");
        match &v.cuts {
            Some(c) => Variable::binned(name, role, c.clone()),
            None => Variable::new(name, v.cardinality, role),
        }
    };

    vars.push(scope_var(LOAD_VAR, VarRole::Context));
    let state_names: Vec<String> = scope
        .vars
        .iter()
        .filter(|v| matches!(v.source, Source::Param(_) | Source::Replicas))
        .map(|v| v.name.clone())
        .collect();
    for name in &state_names {
        let mut prev = scope_var(name, VarRole::Context);
        prev.name = prev_var(name);
        vars.push(prev);
        vars.push(scope_var(name, VarRole::Context));
        edge(&mut edges, &prev_var(name), name);
        edge(&mut edges, ACTION_VAR, name);
    }
    vars.push(Variable::new(ACTION_VAR, n_actions.max(2), VarRole::Action));

    let mut boundary_names = Vec::new();
    if exchange {
        for f in &spec.input_factors {
            let up = sc.service(&f.upstream).expect("validated upstream");
            let (_, p) = up.param(&f.param).expect("validated param");
            let name = input_var(&f.upstream, &f.param);
            vars.push(Variable::new(&name, p.levels.len(), VarRole::Context));
            boundary_names.push(name);
        }
    }

    let metric_names: Vec<String> = scope
        .vars
        .iter()
        .filter(|v| matches!(v.source, Source::Metric(_)))
        .map(|v| v.name.clone())
        .collect();
    for m in &metric_names {
        vars.push(scope_var(m, VarRole::ObservationMetric));
        edge(&mut edges, LOAD_VAR, m);
        for s in state_names.iter().chain(&boundary_names) {
            edge(&mut edges, s, m);
        }
    }

    for slo in &spec.slos {
        let name = slo_var(&slo.id);
        vars.push(Variable::new(&name, 2, VarRole::SloIndicator));
        edge(&mut edges, &metric_var(spec, slo.metric), &name);
    }

    let mut neighbor_slos = Vec::new();
    if exchange {
        for d in sc.downstream_of(service) {
            let Some(f) = d.input_factors.iter().find(|f| f.upstream == service) else {
                continue;
            };
            for slo in &d.slos {
                let name = neighbor_var(&d.id, &slo.id);
                vars.push(Variable::new(&name, 2, VarRole::SloIndicator));
                edge(&mut edges, &f.param, &name);
                edge(&mut edges, LOAD_VAR, &name);
                neighbor_slos.push((name, slo.clone()));
            }
        }
    }

    let to_err = |e: crate::error::BayesNetError| ScenarioError::invalid(format!("agent model for {service}"), e.to_string());
    let mut net = BayesNet::laplace(vars, &edges).map_err(to_err)?;
    let idx = |name: &str| net.var(name).expect("model variable");
    let layout = ModelLayout {
        load: idx(LOAD_VAR),
        state: state_names
            .iter()
            .map(|n| StateVar {
                name: n.clone(),
                prev: idx(&prev_var(n)),
                cur: idx(n),
            })
            .collect(),
        action: idx(ACTION_VAR),
        boundary: boundary_names.iter().map(|n| idx(n)).collect(),
        metrics: metric_names.iter().map(|n| idx(n)).collect(),
        indicators: spec.slos.iter().map(|s| (idx(&slo_var(&s.id)), s.clone())).collect(),
        neighbors: neighbor_slos.into_iter().map(|(n, s)| (idx(&n), s)).collect(),
    };
    for (v, slo) in &layout.indicators {
        seed_indicator(&mut net, *v, slo, confidence);
    }
    Ok((net, layout))
}

/// Adds `confidence` counts to the transition each action is known to
/// cause: `SetParam` moves its parameter to the target level and leaves the
/// rest unchanged, every other action leaves parameters unchanged and only
/// `NoOp` and `SetParam` leave the replica bin unchanged. Rows for
/// action indices beyond `permitted` keep their prior.
pub fn seed_transitions(net: &mut BayesNet, layout: &ModelLayout, permitted: &[ActionKind], confidence: f64) {
    if confidence <= 0.0 {
        return;
    }
    for sv in &layout.state {
        let k = net.cardinality(sv.cur);
        let mut counts = net.cpt(sv.cur).counts.clone();
        let mut assignment = vec![0; net.len()];
        let is_replicas = sv.name == crate::scenario::REPLICAS_VAR;
        for (a, kind) in permitted.iter().enumerate() {
            assignment[layout.action] = a;
            for prev in 0..net.cardinality(sv.prev) {
                assignment[sv.prev] = prev;
                let next = match kind {
                    ActionKind::SetParam { name, level } if *name == sv.name => Some(*level),
                    ActionKind::NoOp | ActionKind::SetParam { .. } => Some(prev),
                    _ if is_replicas => None,
                    _ => Some(prev),
                };
                if let Some(n) = next.filter(|n| *n < k) {
                    let row = net.row_index(sv.cur, &assignment);
                    counts[row * k + n] += confidence;
                }
            }
        }
        let name = net.variable(sv.cur).name.clone();
        net.set_counts(&name, &counts).expect("transition table shape");
    }
}

/// Resets the table of an SLO indicator and adds `confidence` counts to the
/// outcome implied by the SLO definition in every parent bin that lies
/// entirely on one side of the threshold. Returns true when every bin was
/// decided that way.
pub fn seed_indicator(net: &mut BayesNet, var: usize, slo: &Slo, confidence: f64) -> bool {
    let parent = net.parents(var)[0];
    let pv = net.variable(parent).clone();
    let k = pv.cardinality;
    let mut counts = vec![LAPLACE_PRIOR; 2 * k];
    let mut all = true;
    for b in 0..k {
        let fulfilled = match &pv.cuts {
            Some(c) => {
                let lower = if b == 0 { f64::NEG_INFINITY } else { c[b - 1] };
                let upper = if b == k - 1 { f64::INFINITY } else { c[b] };
                // bin b covers (lower, upper]
                match slo.comparator {
                    Comparator::AtMost if upper <= slo.threshold => Some(true),
                    Comparator::AtMost if lower >= slo.threshold => Some(false),
                    Comparator::AtLeast if lower >= slo.threshold => Some(true),
                    Comparator::AtLeast if upper < slo.threshold => Some(false),
                    _ => None,
                }
            }
            None => Some(evaluate_slo(slo, b as f64)),
        };
        match fulfilled {
            Some(f) => counts[2 * b + usize::from(!f)] += confidence,
            None => all = false,
        }
    }
    let name = net.variable(var).name.clone();
    net.set_counts(&name, &counts).expect("indicator table shape");
    all
}
