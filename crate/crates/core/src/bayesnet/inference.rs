//! Exact inference by variable elimination.

use std::collections::BTreeSet;

use super::BayesNet;
use crate::error::BayesNetError;

/// Normalized joint distribution over the query variables, in the order
/// they were requested; last variable varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub probs: Vec<f64>,
}

impl Distribution {
    pub fn get(&self, values: &[usize]) -> f64 {
        let idx = values
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&x, &k)| acc * k + x);
        self.probs[idx]
    }

    /// Marginal of the `pos`-th query variable.
    pub fn marginal(&self, pos: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cards[pos]];
        let inner: usize = self.cards[pos + 1..].iter().product();
        for (i, p) in self.probs.iter().enumerate() {
            out[(i / inner) % self.cards[pos]] += p;
        }
        out
    }

    /// Iterates `(values, probability)` pairs in table order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let mut a = vec![0usize; self.vars.len()];
        self.probs.iter().map(move |&p| {
            let current = a.clone();
            super::increment(&mut a, &self.cards);
            (current, p)
        })
    }
}

/// Table over a sorted set of variables; last variable fastest.
#[derive(Clone, Debug)]
struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn scalar(v: f64) -> Self {
        Factor {
            vars: vec![],
            cards: vec![],
            values: vec![v],
        }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.cards[i + 1];
        }
        s
    }

    /// Table factor for variable `i`, with evidence variables already fixed
    /// and dropped from the scope.
    fn from_cpt(net: &BayesNet, i: usize, evidence: &[Option<usize>]) -> Self {
        let cpt = net.cpt(i);
        let mut family: Vec<usize> = cpt.parents.clone();
        family.push(i);
        let mut vars: Vec<usize> = family
            .iter()
            .copied()
            .filter(|&v| evidence[v].is_none())
            .collect();
        vars.sort_unstable();
        let cards: Vec<usize> = vars.iter().map(|&v| net.cardinality(v)).collect();
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut full = vec![0usize; net.len()];
        for (&v, e) in family.iter().zip(family.iter().map(|&v| evidence[v])) {
            if let Some(x) = e {
                full[v] = x;
            }
        }
        let mut a = vec![0usize; vars.len()];
        for _ in 0..size {
            for (&v, &x) in vars.iter().zip(&a) {
                full[v] = x;
            }
            values.push(net.probability(i, &full));
            super::increment(&mut a, &cards);
        }
        Factor { vars, cards, values }
    }

    fn product(&self, other: &Factor) -> Factor {
        let vars: Vec<usize> = self
            .vars
            .iter()
            .chain(&other.vars)
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cards: Vec<usize> = vars
            .iter()
            .map(|v| {
                self.vars
                    .iter()
                    .position(|x| x == v)
                    .map(|p| self.cards[p])
                    .unwrap_or_else(|| other.cards[other.vars.iter().position(|x| x == v).unwrap()])
            })
            .collect();
        let map_strides = |f: &Factor| -> Vec<usize> {
            let s = f.strides();
            vars.iter()
                .map(|v| f.vars.iter().position(|x| x == v).map(|p| s[p]).unwrap_or(0))
                .collect()
        };
        let sa = map_strides(self);
        let sb = map_strides(other);
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut a = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ia] * other.values[ib]);
            // odometer step keeping both flat indices in sync
            for d in (0..vars.len()).rev() {
                a[d] += 1;
                ia += sa[d];
                ib += sb[d];
                if a[d] < cards[d] {
                    break;
                }
                ia -= sa[d] * cards[d];
                ib -= sb[d] * cards[d];
                a[d] = 0;
            }
        }
        Factor { vars, cards, values }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let Some(pos) = self.vars.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let k = self.cards[pos];
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for x in 0..k {
                let base = (o * k + x) * inner;
                for i in 0..inner {
                    values[o * inner + i] += self.values[base + i];
                }
            }
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        Factor { vars, cards, values }
    }
}

impl BayesNet {
    /// Posterior joint over `query` given `evidence` (pairs of variable index
    /// and value). Fails with [`BayesNetError::ImpossibleEvidence`] when the
    /// evidence has zero probability.
    pub fn infer(
        &self,
        query: &[usize],
        evidence: &[(usize, usize)],
    ) -> Result<Distribution, BayesNetError> {
        let (factor, z) = self.eliminate(query, evidence)?;
        if !(z > 0.0) {
            return Err(BayesNetError::ImpossibleEvidence);
        }
        // factor scope is the sorted query; reorder to the requested order
        let cards: Vec<usize> = query.iter().map(|&v| self.cardinality(v)).collect();
        let strides = factor.strides();
        let map: Vec<usize> = query
            .iter()
            .map(|v| strides[factor.vars.iter().position(|x| x == v).unwrap()])
            .collect();
        let size: usize = cards.iter().product();
        let mut probs = Vec::with_capacity(size);
        let mut a = vec![0usize; query.len()];
        for _ in 0..size {
            let idx: usize = a.iter().zip(&map).map(|(x, s)| x * s).sum();
            probs.push(factor.values[idx] / z);
            super::increment(&mut a, &cards);
        }
        Ok(Distribution {
            vars: query.to_vec(),
            cards,
            probs,
        })
    }

    /// Name-based wrapper around [`Self::infer`].
    pub fn infer_named(
        &self,
        query: &[&str],
        evidence: &[(&str, usize)],
    ) -> Result<Distribution, BayesNetError> {
        let q = query
            .iter()
            .map(|n| self.var(n))
            .collect::<Result<Vec<_>, _>>()?;
        let e = evidence
            .iter()
            .map(|(n, x)| Ok((self.var(n)?, *x)))
            .collect::<Result<Vec<_>, BayesNetError>>()?;
        self.infer(&q, &e)
    }

    /// `ln P(evidence)`, marginalizing every other variable.
    pub fn log_evidence(&self, evidence: &[(usize, usize)]) -> Result<f64, BayesNetError> {
        let (_, z) = self.eliminate(&[], evidence)?;
        Ok(z.ln())
    }

    /// Runs elimination and returns the unnormalized factor over the sorted
    /// query together with its total mass, which equals `P(evidence)`.
    fn eliminate(
        &self,
        query: &[usize],
        evidence: &[(usize, usize)],
    ) -> Result<(Factor, f64), BayesNetError> {
        let n = self.len();
        let mut ev: Vec<Option<usize>> = vec![None; n];
        for &(v, x) in evidence {
            if v >= n {
                return Err(BayesNetError::UnknownVariable(format!("#{v}")));
            }
            if x >= self.cardinality(v) {
                return Err(BayesNetError::OutOfRange {
                    name: self.variable(v).name.clone(),
                    value: x,
                    cardinality: self.cardinality(v),
                });
            }
            match ev[v] {
                Some(prev) if prev != x => return Err(BayesNetError::ImpossibleEvidence),
                _ => ev[v] = Some(x),
            }
        }
        let mut seen = vec![false; n];
        for &q in query {
            if q >= n {
                return Err(BayesNetError::UnknownVariable(format!("#{q}")));
            }
            if ev[q].is_some() {
                return Err(BayesNetError::QueryEvidenceOverlap(self.variable(q).name.clone()));
            }
            if std::mem::replace(&mut seen[q], true) {
                return Err(BayesNetError::QueryEvidenceOverlap(self.variable(q).name.clone()));
            }
        }

        // Only ancestors of query and evidence matter; the rest sums to one.
        let mut relevant = vec![false; n];
        let mut stack: Vec<usize> = query
            .iter()
            .copied()
            .chain(evidence.iter().map(|&(v, _)| v))
            .collect();
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut relevant[u], true) {
                continue;
            }
            stack.extend(self.parents(u).iter().copied().filter(|&p| !relevant[p]));
        }

        let mut factors: Vec<Factor> = (0..n)
            .filter(|&i| relevant[i])
            .map(|i| Factor::from_cpt(self, i, &ev))
            .collect();

        let mut hidden: BTreeSet<usize> = (0..n)
            .filter(|&i| relevant[i] && ev[i].is_none() && !seen[i])
            .collect();
        while !hidden.is_empty() {
            let var = pick_elimination(&factors, &hidden, self);
            hidden.remove(&var);
            let (touching, rest): (Vec<Factor>, Vec<Factor>) =
                factors.into_iter().partition(|f| f.vars.contains(&var));
            factors = rest;
            if let Some(prod) = touching.into_iter().reduce(|a, b| a.product(&b)) {
                factors.push(prod.sum_out(var));
            }
        }

        let result = factors
            .into_iter()
            .reduce(|a, b| a.product(&b))
            .unwrap_or_else(|| Factor::scalar(1.0));
        // Query variables that never entered a relevant factor cannot occur;
        // every query variable is relevant by construction.
        let z: f64 = result.values.iter().sum();
        Ok((result, z))
    }
}

/// Min-weight heuristic: eliminate the variable whose combined factor would
/// be smallest, lowest index first on ties.
fn pick_elimination(factors: &[Factor], hidden: &BTreeSet<usize>, net: &BayesNet) -> usize {
    let mut best = (usize::MAX, usize::MAX);
    for &v in hidden {
        let mut scope = BTreeSet::new();
        for f in factors.iter().filter(|f| f.vars.contains(&v)) {
            scope.extend(f.vars.iter().copied());
        }
        let weight = scope
            .iter()
            .map(|&u| net.cardinality(u))
            .fold(1usize, |a, k| a.saturating_mul(k));
        if weight < best.0 {
            best = (weight, v);
        }
    }
    best.1
}
