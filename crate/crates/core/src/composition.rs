//! Composing per-agent models into one network and exchanging
//! coordination summaries between agents.
//!
//! Two agents' variables are identified when they denote the same physical
//! quantity, such as an upstream parameter and the downstream boundary
//! variable that mirrors it. Identification is transitive. In a composed
//! network each class keeps exactly one table: the one of its owner, which
//! is the left side of the first pair that introduced the class.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agent::AifAgent;
use crate::bayesnet::{BayesNet, Cpt, VarRole, Variable};
use crate::error::{BayesNetError, CompositionError};
use crate::scenario::Scenario;
use crate::services::ActionKind;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarRef {
    pub agent: String,
    pub var: String,
}

impl VarRef {
    pub fn new(agent: impl Into<String>, var: impl Into<String>) -> Self {
        Self {
            agent: agent.into(),
            var: var.into(),
        }
    }

    /// `agent.var`, the name used in composed networks.
    pub fn qualified(&self) -> String {
        format!("{}.{}", self.agent, self.var)
    }
}

/// Declared identities between variables of different agents. The first
/// element of each pair is the owner.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentificationMap {
    pairs: Vec<(VarRef, VarRef)>,
}

impl IdentificationMap {
    pub fn new(pairs: Vec<(VarRef, VarRef)>) -> Self {
        Self { pairs }
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        Self::new(
            sc.identifications()
                .into_iter()
                .map(|p| (VarRef::new(p.owner, p.owner_var), VarRef::new(p.other, p.other_var)))
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[(VarRef, VarRef)] {
        &self.pairs
    }

    /// Equivalence classes under the transitive closure, owner first. Only
    /// variables that appear in some pair are listed.
    pub fn classes(&self) -> Vec<Vec<VarRef>> {
        let mut ids: BTreeMap<&VarRef, usize> = BTreeMap::new();
        let mut order: Vec<&VarRef> = Vec::new();
        for (a, b) in &self.pairs {
            for v in [a, b] {
                ids.entry(v).or_insert_with(|| {
                    order.push(v);
                    order.len() - 1
                });
            }
        }
        let mut uf = UnionFind::new(order.len());
        for (a, b) in &self.pairs {
            uf.union(ids[a], ids[b]);
        }
        let mut classes: BTreeMap<usize, Vec<VarRef>> = BTreeMap::new();
        let mut first_seen = Vec::new();
        for (i, v) in order.iter().enumerate() {
            let r = uf.find(i);
            if !classes.contains_key(&r) {
                first_seen.push(r);
            }
            classes.entry(r).or_default().push((*v).clone());
        }
        // the first variable seen in a class is the left side of its first pair
        first_seen.into_iter().map(|r| classes.remove(&r).unwrap()).collect()
    }

    /// Members of `var`'s class that belong to other agents.
    pub fn counterparts(&self, var: &VarRef) -> Vec<VarRef> {
        self.classes()
            .into_iter()
            .find(|c| c.contains(var))
            .map(|c| c.into_iter().filter(|v| v.agent != var.agent).collect())
            .unwrap_or_default()
    }

    /// Variables of `agent` that take part in some identification.
    pub fn shared_vars(&self, agent: &str) -> BTreeSet<String> {
        self.pairs
            .iter()
            .flat_map(|(a, b)| [a, b])
            .filter(|v| v.agent == agent)
            .map(|v| v.var.clone())
            .collect()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut x = x;
        while self.parent[x] != r {
            let next = self.parent[x];
            self.parent[x] = r;
            x = next;
        }
        r
    }

    /// The root of `a` stays the root, so the earlier class keeps its owner.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[drop] = keep;
        }
    }
}

/// Network over the union of several agents' variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ComposedModel {
    pub net: BayesNet,
    /// Composed variable name to the qualified agent variables it merges.
    pub provenance: BTreeMap<String, Vec<String>>,
    /// Qualified agent variable to the composed variable standing for it.
    pub alias: BTreeMap<String, String>,
}

impl ComposedModel {
    pub fn var_name(&self, agent: &str, var: &str) -> Option<&str> {
        self.alias
            .get(&VarRef::new(agent, var).qualified())
            .map(String::as_str)
    }
}

pub fn compose(models: &[(&str, &BayesNet)], map: &IdentificationMap) -> Result<ComposedModel, CompositionError> {
    let by_agent: BTreeMap<&str, &BayesNet> = models.iter().copied().collect();
    let lookup = |v: &VarRef| -> Result<(&BayesNet, usize), CompositionError> {
        let net = by_agent
            .get(v.agent.as_str())
            .ok_or_else(|| CompositionError::Unknown(v.agent.clone()))?;
        let i = net
            .var(&v.var)
            .map_err(|_| CompositionError::Unknown(v.qualified()))?;
        Ok((net, i))
    };

    // every qualified variable maps to the owner of its class
    let mut alias: BTreeMap<String, String> = BTreeMap::new();
    let mut provenance: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for class in map.classes() {
        let owner = &class[0];
        let (onet, oi) = lookup(owner)?;
        let ko = onet.cardinality(oi);
        for m in &class {
            let (net, i) = lookup(m)?;
            let k = net.cardinality(i);
            if k != ko {
                return Err(CompositionError::CardinalityMismatch {
                    class: owner.qualified(),
                    a: owner.qualified(),
                    ka: ko,
                    b: m.qualified(),
                    kb: k,
                });
            }
            alias.insert(m.qualified(), owner.qualified());
            provenance.entry(owner.qualified()).or_default().push(m.qualified());
        }
    }

    let mut variables: Vec<Variable> = Vec::new();
    let mut sources: Vec<(&BayesNet, usize, &str)> = Vec::new();
    for &(agent, net) in models {
        for (i, v) in net.variables().iter().enumerate() {
            let q = VarRef::new(agent, &v.name).qualified();
            let rep = alias.entry(q.clone()).or_insert_with(|| q.clone()).clone();
            if rep == q {
                provenance.entry(q.clone()).or_insert_with(|| vec![q.clone()]);
                let mut var = v.clone();
                var.name = q;
                variables.push(var);
                sources.push((net, i, agent));
            }
        }
    }
    let index: BTreeMap<&str, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let cpts: Vec<Cpt> = sources
        .iter()
        .map(|&(net, i, agent)| {
            let cpt = net.cpt(i);
            let parents = cpt
                .parents
                .iter()
                .map(|&p| {
                    let q = VarRef::new(agent, &net.variable(p).name).qualified();
                    index[alias[&q].as_str()]
                })
                .collect();
            Cpt {
                parents,
                counts: cpt.counts.clone(),
            }
        })
        .collect();
    let net = BayesNet::from_cpts(variables, cpts).map_err(|e| match e {
        BayesNetError::Cycle(name) => CompositionError::Cycle(name),
        other => CompositionError::Net(other),
    })?;
    Ok(ComposedModel {
        net,
        provenance,
        alias,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SloEstimate {
    /// Probability that the SLO is fulfilled.
    Probability(f64),
    ImpossibleEvidence,
}

/// Marginal probability that every SLO indicator in the composed network is
/// fulfilled, given evidence keyed by composed variable names.
pub fn global_slo_estimate(
    composed: &ComposedModel,
    evidence: &BTreeMap<String, usize>,
) -> Result<BTreeMap<String, SloEstimate>, CompositionError> {
    let net = &composed.net;
    let ev: Vec<(usize, usize)> = evidence
        .iter()
        .map(|(k, &x)| {
            net.var(k)
                .map(|i| (i, x))
                .map_err(|_| CompositionError::Unknown(k.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut out = BTreeMap::new();
    for (i, v) in net.variables().iter().enumerate() {
        if v.role != VarRole::SloIndicator {
            continue;
        }
        let est = match net.infer(&[i], &ev) {
            Ok(d) => SloEstimate::Probability(d.probs[0]),
            Err(BayesNetError::ImpossibleEvidence) => SloEstimate::ImpossibleEvidence,
            Err(e) => return Err(e.into()),
        };
        out.insert(v.name.clone(), est);
    }
    Ok(out)
}

/// Outcome of one of the issuer's SLOs at the summary's step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub service: String,
    pub slo: String,
    pub violated: bool,
    pub weight: f64,
}

/// What an agent tells its neighbours each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationSummary {
    pub issuer: String,
    pub t: u64,
    /// Current values of the issuer's identified variables.
    pub boundary: BTreeMap<String, usize>,
    /// The action the issuer would take given only local information.
    pub intent: Option<ActionKind>,
    pub constraints: Vec<ConstraintReport>,
}

impl CoordinationSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn publish_summary(agent: &AifAgent, t: u64) -> CoordinationSummary {
    let shared = agent.identification_map().shared_vars(agent.id());
    let obs = agent.current_observation();
    let boundary = obs
        .map(|o| {
            o.values
                .iter()
                .filter(|(k, _)| shared.contains(*k))
                .map(|(k, &v)| (k.clone(), v))
                .collect()
        })
        .unwrap_or_default();
    let constraints = agent
        .slos()
        .into_iter()
        .filter_map(|s| {
            let v = obs?.value(&crate::scenario::slo_var(&s.id))?;
            Some(ConstraintReport {
                service: agent.service().to_string(),
                slo: s.id,
                violated: v == 1,
                weight: s.weight,
            })
        })
        .collect();
    CoordinationSummary {
        issuer: agent.id().to_string(),
        t,
        boundary,
        intent: agent.tentative_action(),
        constraints,
    }
}

/// Applies other agents' summaries as evidence. Per issuer the summary with
/// the latest `t` wins; two different summaries with the same `t` keep the
/// first and record a warning. Boundary entries with no counterpart in this
/// agent's model are ignored with a warning.
pub fn incorporate_summaries(agent: &mut AifAgent, summaries: &[CoordinationSummary]) {
    let mut latest: BTreeMap<&str, &CoordinationSummary> = BTreeMap::new();
    let mut warnings = Vec::new();
    for s in summaries {
        if s.issuer == agent.id() {
            continue;
        }
        match latest.get(s.issuer.as_str()) {
            Some(prev) if prev.t > s.t => {}
            Some(prev) if prev.t == s.t => {
                if *prev != s {
                    warnings.push(format!(
                        "conflicting summaries from {} at t={}; kept the first",
                        s.issuer, s.t
                    ));
                }
            }
            _ => {
                latest.insert(&s.issuer, s);
            }
        }
    }
    let map = agent.identification_map().clone();
    let me = agent.id().to_string();
    for s in latest.values() {
        for (var, &value) in &s.boundary {
            let mine: Vec<VarRef> = map
                .counterparts(&VarRef::new(&s.issuer, var))
                .into_iter()
                .filter(|v| v.agent == me)
                .collect();
            if mine.is_empty() {
                if map.shared_vars(&s.issuer).contains(var) {
                    continue;
                }
                warnings.push(format!("{}.{var} is not identified with any variable", s.issuer));
                continue;
            }
            for v in mine {
                if !agent.set_boundary(&v.var, value) {
                    warnings.push(format!("{}.{var} maps to {} which the model lacks", s.issuer, v.var));
                }
            }
        }
        for c in &s.constraints {
            agent.set_neighbor(&c.service, &c.slo, c.violated);
        }
        if let Some(intent) = &s.intent {
            agent.record_intent(&s.issuer, intent.clone());
        }
    }
    for w in warnings {
        agent.warn(w);
    }
}
