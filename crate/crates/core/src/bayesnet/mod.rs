//! Discrete Bayesian networks with Dirichlet-count tables.
//!
//! Every table stores pseudo-counts; probabilities are the row-normalized
//! counts. Networks built with [`BayesNet::with_prior`] start from a uniform
//! Laplace prior, which keeps every probability strictly inside (0, 1).

mod blanket;
mod inference;
mod structure;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::BayesNetError;

pub use blanket::{d_separated, markov_blanket, MarkovBlanket};
pub use inference::Distribution;
pub use structure::{bic_local_score, learn_structure};

/// Largest joint table [`BayesNet::enumerate_joint`] will build.
pub const MAX_JOINT_SIZE: u128 = 1 << 20;

/// Pseudo-count given to every cell of a fresh table.
pub const LAPLACE_PRIOR: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRole {
    ObservationMetric,
    Action,
    SloIndicator,
    Context,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub cardinality: usize,
    pub role: VarRole,
    /// `cardinality - 1` increasing cut points for binned metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<f64>>,
}

impl Variable {
    pub fn new(name: impl Into<String>, cardinality: usize, role: VarRole) -> Self {
        Self {
            name: name.into(),
            cardinality,
            role,
            cuts: None,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, 2, VarRole::Context)
    }

    /// A metric variable whose cardinality follows from its cut points.
    pub fn binned(name: impl Into<String>, role: VarRole, cuts: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            cardinality: cuts.len() + 1,
            role,
            cuts: Some(cuts),
        }
    }

    fn validate(&self) -> Result<(), BayesNetError> {
        if self.cardinality < 2 {
            return Err(BayesNetError::Cardinality {
                name: self.name.clone(),
                cardinality: self.cardinality,
            });
        }
        if let Some(cuts) = &self.cuts {
            let increasing = cuts.windows(2).all(|w| w[0] < w[1]);
            if cuts.len() + 1 != self.cardinality
                || !increasing
                || cuts.iter().any(|c| !c.is_finite())
            {
                return Err(BayesNetError::Binning(self.name.clone()));
            }
        }
        Ok(())
    }
}

/// Bin index for `value`: the first cut point `>= value`, or the top bin.
/// Bins are closed on the right, so a value equal to a cut point belongs to
/// the lower bin. Infinite and NaN values fall in the top bin.
pub fn discretize(value: f64, cuts: &[f64]) -> usize {
    if value.is_nan() {
        return cuts.len();
    }
    cuts.iter().position(|&c| value <= c).unwrap_or(cuts.len())
}

/// Equal-width cut points splitting `[lo, hi]` into `k` bins.
pub fn equal_width_cuts(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let width = (hi - lo) / k as f64;
    (1..k).map(|i| lo + width * i as f64).collect()
}

/// Conditional table for one child variable.
///
/// `counts[row * k + v]` is the pseudo-count of child value `v` under the
/// parent assignment encoded by `row` (first parent most significant).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub parents: Vec<usize>,
    pub counts: Vec<f64>,
}

impl Cpt {
    pub fn row_counts(&self, row: usize, k: usize) -> &[f64] {
        &self.counts[row * k..(row + 1) * k]
    }

    pub fn row_total(&self, row: usize, k: usize) -> f64 {
        self.row_counts(row, k).iter().sum()
    }

    pub fn probability(&self, row: usize, k: usize, value: usize) -> f64 {
        let counts = self.row_counts(row, k);
        let total: f64 = counts.iter().sum();
        counts[value] / total
    }

    pub fn rows(&self, k: usize) -> usize {
        self.counts.len() / k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BayesNet {
    variables: Vec<Variable>,
    cpts: Vec<Cpt>,
    index: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl BayesNet {
    /// Network over `variables` with the given `(parent, child)` edges and
    /// every table cell set to `prior`.
    pub fn with_prior(
        variables: Vec<Variable>,
        edges: &[(String, String)],
        prior: f64,
    ) -> Result<Self, BayesNetError> {
        let mut index = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            v.validate()?;
            if index.insert(v.name.clone(), i).is_some() {
                return Err(BayesNetError::DuplicateVariable(v.name.clone()));
            }
        }
        let mut parents = vec![Vec::new(); variables.len()];
        for (p, c) in edges {
            let pi = *index
                .get(p)
                .ok_or_else(|| BayesNetError::UnknownVariable(p.clone()))?;
            let ci = *index
                .get(c)
                .ok_or_else(|| BayesNetError::UnknownVariable(c.clone()))?;
            if !parents[ci].contains(&pi) {
                parents[ci].push(pi);
            }
        }
        Self::from_parts(variables, parents, |_, _| prior)
    }

    pub fn laplace(variables: Vec<Variable>, edges: &[(String, String)]) -> Result<Self, BayesNetError> {
        Self::with_prior(variables, edges, LAPLACE_PRIOR)
    }

    /// Builds a network from parent index lists, filling table cells with
    /// `fill(child, cell)`.
    pub(crate) fn from_parts(
        variables: Vec<Variable>,
        parents: Vec<Vec<usize>>,
        fill: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, BayesNetError> {
        let cpts = parents
            .into_iter()
            .enumerate()
            .map(|(i, ps)| {
                let rows: usize = ps.iter().map(|&p| variables[p].cardinality).product();
                let cells = rows * variables[i].cardinality;
                Cpt {
                    parents: ps,
                    counts: (0..cells).map(|c| fill(i, c)).collect(),
                }
            })
            .collect();
        Self::from_cpts(variables, cpts)
    }

    pub(crate) fn from_cpts(variables: Vec<Variable>, cpts: Vec<Cpt>) -> Result<Self, BayesNetError> {
        let mut index = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            v.validate()?;
            if index.insert(v.name.clone(), i).is_some() {
                return Err(BayesNetError::DuplicateVariable(v.name.clone()));
            }
        }
        let mut children = vec![Vec::new(); variables.len()];
        for (i, cpt) in cpts.iter().enumerate() {
            let rows: usize = cpt.parents.iter().map(|&p| variables[p].cardinality).product();
            let expected = rows * variables[i].cardinality;
            if cpt.counts.len() != expected {
                return Err(BayesNetError::TableShape {
                    name: variables[i].name.clone(),
                    got: cpt.counts.len(),
                    expected,
                });
            }
            if cpt.counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
                return Err(BayesNetError::InvalidTable(variables[i].name.clone()));
            }
            let k = variables[i].cardinality;
            if (0..rows).any(|r| !(cpt.row_total(r, k) > 0.0)) {
                return Err(BayesNetError::InvalidTable(variables[i].name.clone()));
            }
            for &p in &cpt.parents {
                children[p].push(i);
            }
        }
        let order = topological_order(&cpts.iter().map(|c| c.parents.clone()).collect::<Vec<_>>())
            .map_err(|i| BayesNetError::Cycle(variables[i].name.clone()))?;
        Ok(Self {
            variables,
            cpts,
            index,
            children,
            order,
        })
    }

    /// Replaces the table of `name` with explicit probabilities, laid out
    /// row by row. Zero entries are allowed here, unlike in learned tables.
    pub fn set_probabilities(&mut self, name: &str, probs: &[f64]) -> Result<(), BayesNetError> {
        let i = self.var(name)?;
        let k = self.variables[i].cardinality;
        let cpt = &mut self.cpts[i];
        if probs.len() != cpt.counts.len() {
            return Err(BayesNetError::TableShape {
                name: name.to_string(),
                got: probs.len(),
                expected: cpt.counts.len(),
            });
        }
        for row in probs.chunks(k) {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(BayesNetError::InvalidTable(name.to_string()));
            }
        }
        cpt.counts = probs.to_vec();
        Ok(())
    }

    /// Replaces the raw pseudo-counts of `name`.
    pub fn set_counts(&mut self, name: &str, counts: &[f64]) -> Result<(), BayesNetError> {
        let i = self.var(name)?;
        let k = self.variables[i].cardinality;
        let cpt = &self.cpts[i];
        if counts.len() != cpt.counts.len() {
            return Err(BayesNetError::TableShape {
                name: name.to_string(),
                got: counts.len(),
                expected: cpt.counts.len(),
            });
        }
        if counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite())
            || counts.chunks(k).any(|r| !(r.iter().sum::<f64>() > 0.0))
        {
            return Err(BayesNetError::InvalidTable(name.to_string()));
        }
        self.cpts[i].counts = counts.to_vec();
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, i: usize) -> &Variable {
        &self.variables[i]
    }

    pub fn cpt(&self, i: usize) -> &Cpt {
        &self.cpts[i]
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn var(&self, name: &str) -> Result<usize, BayesNetError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| BayesNetError::UnknownVariable(name.to_string()))
    }

    pub fn has_var(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.variables[i].cardinality
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.cpts[i].parents
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Variable indices in a parents-before-children order.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// `(parent, child)` edges by name, in child order.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (c, cpt) in self.cpts.iter().enumerate() {
            for &p in &cpt.parents {
                out.push((self.variables[p].name.clone(), self.variables[c].name.clone()));
            }
        }
        out
    }

    /// Table row selected by the parent values in a full assignment.
    pub fn row_index(&self, i: usize, assignment: &[usize]) -> usize {
        self.cpts[i]
            .parents
            .iter()
            .fold(0, |row, &p| row * self.variables[p].cardinality + assignment[p])
    }

    pub fn probability(&self, i: usize, assignment: &[usize]) -> f64 {
        let row = self.row_index(i, assignment);
        self.cpts[i].probability(row, self.variables[i].cardinality, assignment[i])
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.cpts.iter().all(|c| c.counts.iter().all(|&x| x > 0.0))
    }

    /// Converts a named complete assignment into index form.
    pub fn assignment(&self, named: &BTreeMap<String, usize>) -> Result<Vec<usize>, BayesNetError> {
        let mut out = Vec::with_capacity(self.len());
        for v in &self.variables {
            let value = *named
                .get(&v.name)
                .ok_or_else(|| BayesNetError::Incomplete(v.name.clone()))?;
            out.push(value);
        }
        self.check_assignment(&out)?;
        Ok(out)
    }

    pub fn check_assignment(&self, assignment: &[usize]) -> Result<(), BayesNetError> {
        if assignment.len() != self.len() {
            return Err(BayesNetError::Incomplete(format!(
                "{} of {} values",
                assignment.len(),
                self.len()
            )));
        }
        for (v, &x) in self.variables.iter().zip(assignment) {
            if x >= v.cardinality {
                return Err(BayesNetError::OutOfRange {
                    name: v.name.clone(),
                    value: x,
                    cardinality: v.cardinality,
                });
            }
        }
        Ok(())
    }

    /// Natural log of the joint probability of a complete assignment.
    pub fn log_prob(&self, assignment: &[usize]) -> Result<f64, BayesNetError> {
        self.check_assignment(assignment)?;
        Ok((0..self.len())
            .map(|i| self.probability(i, assignment).ln())
            .sum())
    }

    /// `-ln P(assignment)` in nats. Infinite only for hand-set tables with
    /// zero entries.
    pub fn surprise(&self, assignment: &[usize]) -> Result<f64, BayesNetError> {
        Ok(-self.log_prob(assignment)?)
    }

    /// Dirichlet update: adds one count per variable for every assignment in
    /// the batch. Returns a new network; the structure is unchanged.
    pub fn update_parameters(&self, batch: &[Vec<usize>]) -> Result<BayesNet, BayesNetError> {
        let mut next = self.clone();
        next.absorb(batch)?;
        Ok(next)
    }

    /// In-place form of [`Self::update_parameters`]. The batch is validated
    /// in full before any count changes.
    pub fn absorb(&mut self, batch: &[Vec<usize>]) -> Result<(), BayesNetError> {
        for a in batch {
            self.check_assignment(a)?;
        }
        for a in batch {
            for i in 0..self.len() {
                let k = self.variables[i].cardinality;
                let row = self.row_index(i, a);
                self.cpts[i].counts[row * k + a[i]] += 1.0;
            }
        }
        Ok(())
    }

    /// Shrinks every count toward `floor` by factor `keep`, so old evidence
    /// fades while the prior stays in place.
    pub fn decay_counts(&mut self, keep: f64, floor: f64) {
        for cpt in &mut self.cpts {
            for c in &mut cpt.counts {
                if *c > floor {
                    *c = floor + (*c - floor) * keep;
                }
            }
        }
    }

    /// Resets the table of `name` to the uniform prior.
    pub fn reset_counts(&mut self, name: &str, prior: f64) -> Result<(), BayesNetError> {
        let i = self.var(name)?;
        self.cpts[i].counts.iter_mut().for_each(|c| *c = prior);
        Ok(())
    }

    pub fn joint_size(&self) -> u128 {
        self.variables
            .iter()
            .map(|v| v.cardinality as u128)
            .fold(1u128, |a, k| a.saturating_mul(k))
    }

    /// Full joint table by brute-force multiplication of table rows. Entries
    /// are in mixed-radix order over the variables, last variable fastest.
    pub fn enumerate_joint(&self) -> Result<JointTable, BayesNetError> {
        let size = self.joint_size();
        if size > MAX_JOINT_SIZE {
            return Err(BayesNetError::TooLarge(size));
        }
        let cards: Vec<usize> = self.variables.iter().map(|v| v.cardinality).collect();
        let mut values = Vec::with_capacity(size as usize);
        let mut a = vec![0usize; self.len()];
        for _ in 0..size {
            values.push((0..self.len()).map(|i| self.probability(i, &a)).product());
            increment(&mut a, &cards);
        }
        Ok(JointTable { cards, values })
    }

    pub fn to_document(&self) -> NetDocument {
        NetDocument {
            format_version: 1,
            variables: self.variables.clone(),
            tables: self
                .cpts
                .iter()
                .enumerate()
                .map(|(i, c)| TableDocument {
                    child: self.variables[i].name.clone(),
                    parents: c.parents.iter().map(|&p| self.variables[p].name.clone()).collect(),
                    counts: c.counts.clone(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &NetDocument) -> Result<Self, BayesNetError> {
        if doc.format_version != 1 {
            return Err(BayesNetError::Format(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let index: HashMap<&str, usize> = doc
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect();
        let mut cpts: Vec<Option<Cpt>> = vec![None; doc.variables.len()];
        for t in &doc.tables {
            let c = *index
                .get(t.child.as_str())
                .ok_or_else(|| BayesNetError::UnknownVariable(t.child.clone()))?;
            let parents = t
                .parents
                .iter()
                .map(|p| {
                    index
                        .get(p.as_str())
                        .copied()
                        .ok_or_else(|| BayesNetError::UnknownVariable(p.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if cpts[c].is_some() {
                return Err(BayesNetError::Format(format!("duplicate table for `{}`", t.child)));
            }
            cpts[c] = Some(Cpt {
                parents,
                counts: t.counts.clone(),
            });
        }
        let cpts = cpts
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                c.ok_or_else(|| {
                    BayesNetError::Format(format!("missing table for `{}`", doc.variables[i].name))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_cpts(doc.variables.clone(), cpts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("network document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BayesNetError> {
        let doc: NetDocument =
            serde_json::from_str(text).map_err(|e| BayesNetError::Format(e.to_string()))?;
        Self::from_document(&doc)
    }
}

/// Serialized network: variables, then one count table per child.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetDocument {
    pub format_version: u32,
    pub variables: Vec<Variable>,
    pub tables: Vec<TableDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub child: String,
    pub parents: Vec<String>,
    pub counts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl JointTable {
    pub fn index_of(&self, assignment: &[usize]) -> usize {
        assignment
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&x, &k)| acc * k + x)
    }

    pub fn get(&self, assignment: &[usize]) -> f64 {
        self.values[self.index_of(assignment)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Mixed-radix increment, last position fastest. Wraps to all zeros.
pub(crate) fn increment(a: &mut [usize], cards: &[usize]) {
    for i in (0..a.len()).rev() {
        a[i] += 1;
        if a[i] < cards[i] {
            return;
        }
        a[i] = 0;
    }
}

/// Kahn's algorithm with smallest-index-first tie-breaking. On a cycle the
/// error carries one variable on it.
pub(crate) fn topological_order(parents: &[Vec<usize>]) -> Result<Vec<usize>, usize> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = ready.pop_first() {
        order.push(u);
        for &c in &children[u] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&i| indegree[i] > 0).unwrap_or(0))
    }
}
