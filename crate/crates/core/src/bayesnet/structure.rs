//! Greedy hill-climbing structure search scored by BIC.

use std::collections::{BTreeSet, HashMap};

use super::{topological_order, BayesNet, Variable, LAPLACE_PRIOR};
use crate::error::BayesNetError;

/// Score differences smaller than this are treated as ties.
const TIE_EPS: f64 = 1e-9;

/// BIC contribution of one variable given a parent set:
/// maximized log-likelihood minus `ln(N)/2` per free parameter.
pub fn bic_local_score(
    cards: &[usize],
    data: &[Vec<usize>],
    child: usize,
    parents: &[usize],
) -> f64 {
    let k = cards[child];
    let rows: usize = parents.iter().map(|&p| cards[p]).product();
    let mut counts = vec![0.0f64; rows * k];
    for a in data {
        let row = parents.iter().fold(0, |r, &p| r * cards[p] + a[p]);
        counts[row * k + a[child]] += 1.0;
    }
    let mut ll = 0.0;
    for row in counts.chunks(k) {
        let total: f64 = row.iter().sum();
        for &c in row {
            if c > 0.0 {
                ll += c * (c / total).ln();
            }
        }
    }
    let params = (k - 1) as f64 * rows as f64;
    ll - 0.5 * (data.len() as f64).ln() * params
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Move {
    Add,
    Remove,
    Reverse,
}

/// Learns a DAG over `variables` from complete assignments.
///
/// Starts from the empty graph and repeatedly applies the best single edge
/// addition, removal or reversal until no move improves the BIC score.
/// Equal-scoring moves resolve to the lexicographically smallest
/// `(parent name, child name)` edge. `candidates`, when given, restricts the
/// edges that may appear. The returned network carries Laplace-prior counts
/// plus the data.
pub fn learn_structure(
    variables: &[Variable],
    data: &[Vec<usize>],
    candidates: Option<&BTreeSet<(String, String)>>,
    max_parents: usize,
) -> Result<BayesNet, BayesNetError> {
    if data.is_empty() {
        return Err(BayesNetError::EmptyData);
    }
    if max_parents > 3 {
        return Err(BayesNetError::MaxParents(max_parents));
    }
    let n = variables.len();
    let cards: Vec<usize> = variables.iter().map(|v| v.cardinality).collect();
    for a in data {
        if a.len() != n {
            return Err(BayesNetError::Incomplete(format!("{} of {n} values", a.len())));
        }
        for (i, &x) in a.iter().enumerate() {
            if x >= cards[i] {
                return Err(BayesNetError::OutOfRange {
                    name: variables[i].name.clone(),
                    value: x,
                    cardinality: cards[i],
                });
            }
        }
    }

    // variable indices in name order, so edge iteration is lexicographic
    let mut by_name: Vec<usize> = (0..n).collect();
    by_name.sort_by(|&a, &b| variables[a].name.cmp(&variables[b].name));
    let allowed = |p: usize, c: usize| {
        p != c
            && candidates.is_none_or(|set| {
                set.contains(&(variables[p].name.clone(), variables[c].name.clone()))
            })
    };

    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut cache: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    let mut score = |child: usize, ps: &[usize]| -> f64 {
        let mut key = ps.to_vec();
        key.sort_unstable();
        *cache
            .entry((child, key.clone()))
            .or_insert_with(|| bic_local_score(&cards, data, child, &key))
    };

    loop {
        let mut best: Option<(f64, usize, usize, Move)> = None;
        for &p in &by_name {
            for &c in &by_name {
                if p == c {
                    continue;
                }
                let present = parents[c].contains(&p);
                let mut consider = |delta: f64, mv: Move| {
                    if delta > TIE_EPS && best.is_none_or(|(d, ..)| delta > d + TIE_EPS) {
                        best = Some((delta, p, c, mv));
                    }
                };
                if present {
                    let without: Vec<usize> = parents[c].iter().copied().filter(|&x| x != p).collect();
                    let d_remove = score(c, &without) - score(c, &parents[c]);
                    consider(d_remove, Move::Remove);

                    if allowed(c, p) && parents[p].len() < max_parents {
                        let mut trial = parents.clone();
                        trial[c].retain(|&x| x != p);
                        trial[p].push(c);
                        if topological_order(&trial).is_ok() {
                            let mut p_with = parents[p].clone();
                            p_with.push(c);
                            let d = d_remove + score(p, &p_with) - score(p, &parents[p]);
                            consider(d, Move::Reverse);
                        }
                    }
                } else if allowed(p, c)
                    && parents[c].len() < max_parents
                    && !parents[p].contains(&c)
                {
                    let mut trial = parents.clone();
                    trial[c].push(p);
                    if topological_order(&trial).is_ok() {
                        let mut with = parents[c].clone();
                        with.push(p);
                        consider(score(c, &with) - score(c, &parents[c]), Move::Add);
                    }
                }
            }
        }
        let Some((_, p, c, mv)) = best else { break };
        match mv {
            Move::Add => parents[c].push(p),
            Move::Remove => parents[c].retain(|&x| x != p),
            Move::Reverse => {
                parents[c].retain(|&x| x != p);
                parents[p].push(c);
            }
        }
    }

    for ps in &mut parents {
        ps.sort_unstable();
    }
    let mut net = BayesNet::from_parts(variables.to_vec(), parents, |_, _| LAPLACE_PRIOR)?;
    net.absorb(data)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_data_rejected() {
        let vars = vec![Variable::binary("a")];
        assert_eq!(
            learn_structure(&vars, &[], None, 3),
            Err(BayesNetError::EmptyData)
        );
    }

    #[test]
    fn max_parents_bound() {
        let vars = vec![Variable::binary("a")];
        assert_eq!(
            learn_structure(&vars, &[vec![0]], None, 4),
            Err(BayesNetError::MaxParents(4))
        );
    }

    #[test]
    fn zero_parents_forces_empty_graph() {
        let vars = vec![Variable::binary("a"), Variable::binary("b")];
        let data: Vec<Vec<usize>> = (0..200).map(|i| vec![i % 2, i % 2]).collect();
        let net = learn_structure(&vars, &data, None, 0).unwrap();
        assert!(net.edges().is_empty());
    }

    #[test]
    fn candidate_set_restricts_edges() {
        let vars = vec![Variable::binary("a"), Variable::binary("b")];
        let data: Vec<Vec<usize>> = (0..200).map(|i| vec![i % 2, i % 2]).collect();
        let only = BTreeSet::from([("b".to_string(), "a".to_string())]);
        let net = learn_structure(&vars, &data, Some(&only), 3).unwrap();
        assert_eq!(net.edges(), vec![("b".to_string(), "a".to_string())]);
    }
}
