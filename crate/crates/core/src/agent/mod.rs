//! Active Inference agent managing one service.
//!
//! Each step the agent turns its scoped observation into a complete
//! assignment of its model, scores the assignment's surprise, updates the
//! Dirichlet counts and picks the permitted action with the lowest expected
//! free energy.

mod efe;
mod model;
mod preferences;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bayesnet::{BayesNet, LAPLACE_PRIOR};
use crate::composition::{self, CoordinationSummary, IdentificationMap};
use crate::error::{BayesNetError, ScenarioError};
use crate::rng::SimRng;
use crate::scenario::{neighbor_var, slo_var, Scenario};
use crate::services::{ActionKind, Slo};
use crate::sim::{ActContext, Agent, AgentError, Observation};

pub use efe::{information_gain, policy_terms, select_action, selection_probabilities, EfeBreakdown};
pub use model::{build_model, prev_var, seed_indicator, seed_transitions, ModelLayout, StateVar, ACTION_VAR};
pub use preferences::Preferences;

/// Tunable hyperparameters, settable per binding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AifParams {
    /// Initial weight of the epistemic term.
    pub beta: f64,
    /// Multiplier applied to beta after every acting step.
    pub beta_decay: f64,
    pub beta_floor: f64,
    /// Softmax temperature for action selection; 0 picks the argmin.
    pub tau: f64,
    /// Magnitude of the log-preference for a fulfilled SLO of weight 1.
    pub preference_strength: f64,
    /// Scale applied to preferences over downstream SLOs.
    pub neighbor_weight: f64,
    /// Observations per Dirichlet update.
    pub batch_size: usize,
    /// Fraction of learned counts kept at each update; `None` disables decay.
    pub count_decay: Option<f64>,
    /// Counts placed on the outcome an SLO definition implies.
    pub indicator_confidence: f64,
    /// Counts placed on the configuration change each action is known to cause.
    pub transition_confidence: f64,
}

impl Default for AifParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            beta_decay: 0.995,
            beta_floor: 0.05,
            tau: 0.0,
            preference_strength: 2.0,
            neighbor_weight: 1.0,
            batch_size: 1,
            count_decay: None,
            indicator_confidence: 100.0,
            transition_confidence: 20.0,
        }
    }
}

impl AifParams {
    pub fn validate(&self) -> Result<(), String> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.beta) {
            return Err("beta must be finite and >= 0".into());
        }
        if !(self.beta_decay > 0.0 && self.beta_decay <= 1.0) {
            return Err("beta_decay must lie in (0, 1]".into());
        }
        if !finite_nonneg(self.beta_floor) {
            return Err("beta_floor must be finite and >= 0".into());
        }
        if !finite_nonneg(self.tau) {
            return Err("tau must be finite and >= 0".into());
        }
        if !(self.preference_strength > 0.0 && self.preference_strength.is_finite()) {
            return Err("preference_strength must be finite and > 0".into());
        }
        if !finite_nonneg(self.neighbor_weight) {
            return Err("neighbor_weight must be finite and >= 0".into());
        }
        if self.batch_size < 1 {
            return Err("batch_size must be >= 1".into());
        }
        if let Some(k) = self.count_decay {
            if !(k > 0.0 && k <= 1.0) {
                return Err("count_decay must lie in (0, 1]".into());
            }
        }
        if !finite_nonneg(self.indicator_confidence) {
            return Err("indicator_confidence must be finite and >= 0".into());
        }
        if !finite_nonneg(self.transition_confidence) {
            return Err("transition_confidence must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// Beliefs after the latest observation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub t: u64,
    pub observed: BTreeMap<String, usize>,
    /// Posterior marginals of scope variables missing from the observation.
    pub posterior: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct AifAgent {
    id: String,
    service: String,
    params: AifParams,
    beta: f64,
    net: BayesNet,
    layout: ModelLayout,
    permitted: Vec<ActionKind>,
    prefs: Preferences,
    idmap: IdentificationMap,
    pending: Option<Observation>,
    last_obs: Option<Observation>,
    last_action: Option<usize>,
    boundary: BTreeMap<usize, usize>,
    neighbors: BTreeMap<usize, usize>,
    intents: BTreeMap<String, ActionKind>,
    batch: Vec<Vec<usize>>,
    belief: BeliefState,
    last_surprise: Option<f64>,
    last_efe: Vec<EfeBreakdown>,
    warnings: Vec<String>,
}

impl AifAgent {
    /// Agent for the service bound in `sc`. With `exchange`, the model gains
    /// boundary variables for upstream parameters and constraint variables
    /// for downstream SLOs.
    pub fn from_scenario(sc: &Scenario, service: &str, exchange: bool) -> Result<Self, ScenarioError> {
        let binding = sc.binding(service).ok_or_else(|| ScenarioError::Dangling {
            kind: "binding",
            id: service.to_string(),
            context: "aif agent".into(),
        })?;
        let mut params = binding.aif.clone();
        params
            .validate()
            .map_err(|r| ScenarioError::invalid(format!("bindings.{service}.aif"), r))?;
        params.batch_size = params.batch_size.max(1);
        let permitted = sc.permitted_actions(binding)?;
        let (mut net, layout) =
            build_model(sc, service, permitted.len(), exchange, params.indicator_confidence)?;
        seed_transitions(&mut net, &layout, &permitted, params.transition_confidence);
        let mut agent = Self {
            id: binding.service.clone(),
            service: service.to_string(),
            beta: params.beta,
            params,
            net,
            layout,
            permitted,
            prefs: Preferences::default(),
            idmap: IdentificationMap::from_scenario(sc),
            pending: None,
            last_obs: None,
            last_action: None,
            boundary: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            intents: BTreeMap::new(),
            batch: Vec::new(),
            belief: BeliefState::default(),
            last_surprise: None,
            last_efe: Vec::new(),
            warnings: Vec::new(),
        };
        agent.rebuild_preferences();
        Ok(agent)
    }

    fn rebuild_preferences(&mut self) {
        let strength = self.params.preference_strength;
        let mut prefs = Preferences::default();
        for (v, slo) in &self.layout.indicators {
            prefs.set(self.net.variable(*v).name.clone(), strength * slo.weight);
        }
        for (v, slo) in &self.layout.neighbors {
            prefs.set(
                self.net.variable(*v).name.clone(),
                strength * slo.weight * self.params.neighbor_weight,
            );
        }
        self.prefs = prefs;
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn service(&self) -> &str {
        &self.service
    }

    pub fn model(&self) -> &BayesNet {
        &self.net
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn params(&self) -> &AifParams {
        &self.params
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn preferences(&self) -> &Preferences {
        &self.prefs
    }

    pub fn permitted(&self) -> &[ActionKind] {
        &self.permitted
    }

    pub fn slos(&self) -> Vec<Slo> {
        self.layout.indicators.iter().map(|(_, s)| s.clone()).collect()
    }

    pub fn identification_map(&self) -> &IdentificationMap {
        &self.idmap
    }

    pub fn intents(&self) -> &BTreeMap<String, ActionKind> {
        &self.intents
    }

    /// Observation the agent will act on next, if any.
    pub fn current_observation(&self) -> Option<&Observation> {
        self.pending.as_ref().or(self.last_obs.as_ref())
    }

    /// Sets boundary evidence for a model variable. False when the model has
    /// no such boundary variable.
    pub fn set_boundary(&mut self, var: &str, value: usize) -> bool {
        match self.net.var(var) {
            Ok(i) if self.layout.boundary.contains(&i) && value < self.net.cardinality(i) => {
                self.boundary.insert(i, value);
                true
            }
            _ => false,
        }
    }

    /// Records whether a downstream SLO was violated. False when the model
    /// does not track it.
    pub fn set_neighbor(&mut self, service: &str, slo: &str, violated: bool) -> bool {
        match self.net.var(&neighbor_var(service, slo)) {
            Ok(i) if self.layout.neighbors.iter().any(|(v, _)| *v == i) => {
                self.neighbors.insert(i, usize::from(violated));
                true
            }
            _ => false,
        }
    }

    pub fn record_intent(&mut self, issuer: &str, kind: ActionKind) {
        self.intents.insert(issuer.to_string(), kind);
    }

    pub fn warn(&mut self, message: String) {
        self.warnings.push(message);
    }

    /// Starts a new step: stores the observation and clears per-step
    /// evidence received from other agents.
    pub fn begin_step(&mut self, obs: &Observation) {
        self.pending = Some(obs.clone());
        self.boundary.clear();
        self.neighbors.clear();
        self.intents.clear();
    }

    /// Folds an observation into the model and returns its surprise in nats.
    /// Complete assignments (every step after the first) also update the
    /// Dirichlet counts.
    pub fn perceive(&mut self, obs: &Observation) -> f64 {
        let n = self.net.len();
        let mut a: Vec<Option<usize>> = vec![None; n];
        for (name, &x) in &obs.values {
            if let Ok(i) = self.net.var(name) {
                a[i] = Some(x);
            }
        }
        if let Some(prev) = &self.last_obs {
            for s in &self.layout.state {
                a[s.prev] = prev.value(&s.name);
            }
        }
        a[self.layout.action] = self.last_action;
        for (&v, &x) in self.boundary.iter().chain(&self.neighbors) {
            a[v] = Some(x);
        }

        let surprise = if a.iter().all(Option::is_some) {
            let full: Vec<usize> = a.iter().map(|x| x.unwrap()).collect();
            let s = self.net.surprise(&full).unwrap_or(f64::INFINITY);
            self.batch.push(full);
            if self.batch.len() >= self.params.batch_size {
                if let Some(keep) = self.params.count_decay {
                    self.net.decay_counts(keep, LAPLACE_PRIOR);
                }
                let batch = std::mem::take(&mut self.batch);
                if let Err(e) = self.net.absorb(&batch) {
                    self.warnings.push(format!("t={}: update skipped: {e}", obs.t));
                }
            }
            s
        } else {
            let ev: Vec<(usize, usize)> = a
                .iter()
                .enumerate()
                .filter_map(|(i, x)| x.map(|x| (i, x)))
                .collect();
            self.net.log_evidence(&ev).map(|l| -l).unwrap_or(f64::INFINITY)
        };

        let mut posterior = BTreeMap::new();
        let ev = self.current_evidence(obs);
        for s in &self.layout.state {
            if obs.value(&s.name).is_none() {
                if let Ok(d) = self.net.infer(&[s.cur], &ev) {
                    posterior.insert(s.name.clone(), d.probs);
                }
            }
        }
        self.belief = BeliefState {
            t: obs.t,
            observed: obs.values.clone(),
            posterior,
        };
        self.last_surprise = Some(surprise);
        self.last_obs = Some(obs.clone());
        surprise
    }

    fn current_evidence(&self, obs: &Observation) -> Vec<(usize, usize)> {
        let mut ev = Vec::new();
        for (name, &x) in &obs.values {
            if let Ok(i) = self.net.var(name) {
                ev.push((i, x));
            }
        }
        ev
    }

    /// Evidence for predicting the next step under action index `a`: the
    /// current configuration as `prev_*`, the current load bin, the action
    /// and any boundary values received this step.
    fn policy_evidence(&self, obs: &Observation, a: usize) -> Vec<(usize, usize)> {
        let mut ev = Vec::new();
        for s in &self.layout.state {
            if let Some(x) = obs.value(&s.name) {
                ev.push((s.prev, x));
            }
        }
        if let Some(x) = obs.value(&self.net.variable(self.layout.load).name) {
            ev.push((self.layout.load, x));
        }
        ev.push((self.layout.action, a));
        ev.extend(self.boundary.iter().map(|(&v, &x)| (v, x)));
        ev
    }

    /// Expected free energy of every permitted action, in action order.
    pub fn expected_free_energy(&self, obs: &Observation) -> Result<Vec<EfeBreakdown>, BayesNetError> {
        self.permitted
            .iter()
            .enumerate()
            .map(|(i, kind)| {
                let (pragmatic, epistemic) =
                    policy_terms(&self.net, &self.policy_evidence(obs, i), &self.prefs)?;
                Ok(EfeBreakdown {
                    action: kind.clone(),
                    pragmatic,
                    epistemic,
                    total: pragmatic + self.beta * epistemic,
                })
            })
            .collect()
    }

    /// Picks an action for the latest perceived observation. Off-cadence
    /// steps issue `noop` without scoring.
    pub fn decide(&mut self, acting: bool, rng: &mut SimRng) -> Result<ActionKind, BayesNetError> {
        let noop = self
            .permitted
            .iter()
            .position(|k| *k == ActionKind::NoOp)
            .unwrap_or(0);
        if !acting {
            self.last_action = Some(noop);
            self.last_efe.clear();
            return Ok(ActionKind::NoOp);
        }
        let obs = self.last_obs.clone().ok_or(BayesNetError::Incomplete("no observation yet".into()))?;
        let breakdowns = self.expected_free_energy(&obs)?;
        let i = select_action(&breakdowns, self.params.tau, rng);
        self.last_action = Some(i);
        self.last_efe = breakdowns;
        self.beta = (self.beta * self.params.beta_decay).max(self.params.beta_floor);
        Ok(self.permitted[i].clone())
    }

    /// Perceive then decide.
    pub fn agent_step(&mut self, obs: &Observation, acting: bool, rng: &mut SimRng) -> Result<ActionKind, BayesNetError> {
        self.perceive(obs);
        self.decide(acting, rng)
    }

    /// Argmin action for the pending observation under the current model,
    /// without learning or side effects.
    pub fn tentative_action(&self) -> Option<ActionKind> {
        let obs = self.current_observation()?;
        let b = self.expected_free_energy(obs).ok()?;
        let mut best = 0;
        for (i, x) in b.iter().enumerate() {
            if x.total < b[best].total {
                best = i;
            }
        }
        Some(b[best].action.clone())
    }

    /// Installs a new SLO set. Indicators whose definition changed are
    /// re-seeded from the definition; learned dynamics are kept.
    pub fn update_slos(&mut self, slos: &[Slo]) {
        let confidence = self.params.indicator_confidence;
        let mut indicators = std::mem::take(&mut self.layout.indicators);
        for (v, old) in &mut indicators {
            if let Some(new) = slos.iter().find(|s| s.id == old.id) {
                if new != old {
                    if !seed_indicator(&mut self.net, *v, new, confidence) {
                        self.warnings.push(format!(
                            "threshold {} of slo {} does not fall on a bin boundary",
                            new.threshold, new.id
                        ));
                    }
                    *old = new.clone();
                }
            }
        }
        self.layout.indicators = indicators;
        self.rebuild_preferences();
    }

    pub fn last_efe(&self) -> &[EfeBreakdown] {
        &self.last_efe
    }

    pub fn last_surprise(&self) -> Option<f64> {
        self.last_surprise
    }

    pub fn indicator_var(&self, slo_id: &str) -> Option<usize> {
        self.net.var(&slo_var(slo_id)).ok()
    }
}

impl Agent for AifAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn service(&self) -> &str {
        &self.service
    }

    fn observe(&mut self, obs: &Observation) {
        self.begin_step(obs);
    }

    fn slos_changed(&mut self, slos: &[Slo]) {
        self.update_slos(slos);
    }

    fn publish(&mut self, t: u64) -> Option<CoordinationSummary> {
        Some(composition::publish_summary(self, t))
    }

    fn incorporate(&mut self, summaries: &[CoordinationSummary]) {
        composition::incorporate_summaries(self, summaries);
    }

    fn act(&mut self, ctx: &mut ActContext<'_>) -> Result<ActionKind, AgentError> {
        let obs = self
            .pending
            .take()
            .ok_or_else(|| AgentError::new("no observation for this step"))?;
        self.perceive(&obs);
        self.decide(ctx.acting, ctx.rng)
            .map_err(|e| AgentError::new(e.to_string()))
    }

    fn surprise(&self) -> Option<f64> {
        self.last_surprise
    }

    fn efe(&self) -> &[EfeBreakdown] {
        &self.last_efe
    }

    fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }
}
