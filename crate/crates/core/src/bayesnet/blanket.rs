//! Markov blankets and d-separation.

use std::collections::{BTreeSet, VecDeque};

use super::BayesNet;
use crate::error::BayesNetError;

/// Statistical boundary around a set of target variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkovBlanket {
    pub targets: BTreeSet<String>,
    /// Parents, children and co-parents of the targets, minus the targets.
    pub members: BTreeSet<String>,
    /// Edges of the sub-graph induced on targets and members.
    pub edges: Vec<(String, String)>,
}

impl MarkovBlanket {
    pub fn contains(&self, name: &str) -> bool {
        self.members.contains(name)
    }
}

pub fn markov_blanket(net: &BayesNet, targets: &[&str]) -> Result<MarkovBlanket, BayesNetError> {
    if targets.is_empty() {
        return Err(BayesNetError::UnknownVariable("<empty target set>".into()));
    }
    let ts: BTreeSet<usize> = targets
        .iter()
        .map(|t| net.var(t))
        .collect::<Result<_, _>>()?;
    let mut members = BTreeSet::new();
    for &t in &ts {
        members.extend(net.parents(t).iter().copied());
        for &c in net.children(t) {
            members.insert(c);
            members.extend(net.parents(c).iter().copied());
        }
    }
    for t in &ts {
        members.remove(t);
    }
    let inside: BTreeSet<usize> = ts.union(&members).copied().collect();
    let edges = net
        .edges()
        .into_iter()
        .filter(|(p, c)| {
            inside.contains(&net.var(p).unwrap()) && inside.contains(&net.var(c).unwrap())
        })
        .collect();
    let name = |i: &usize| net.variable(*i).name.clone();
    Ok(MarkovBlanket {
        targets: ts.iter().map(name).collect(),
        members: members.iter().map(name).collect(),
        edges,
    })
}

/// True when every node in `xs` is d-separated from every node in `ys`
/// given `zs`. Reachability search over (node, direction) pairs.
pub fn d_separated(net: &BayesNet, xs: &[usize], ys: &[usize], zs: &[usize]) -> bool {
    let n = net.len();
    let mut observed = vec![false; n];
    for &z in zs {
        observed[z] = true;
    }
    // ancestors of the conditioning set, inclusive
    let mut anc = vec![false; n];
    let mut stack: Vec<usize> = zs.to_vec();
    while let Some(u) = stack.pop() {
        if std::mem::replace(&mut anc[u], true) {
            continue;
        }
        stack.extend(net.parents(u).iter().copied());
    }

    let targets: BTreeSet<usize> = ys.iter().copied().collect();
    // direction: false = arrived from a child (moving up), true = from a parent
    let mut visited = vec![[false; 2]; n];
    let mut queue: VecDeque<(usize, bool)> = xs.iter().map(|&x| (x, false)).collect();
    while let Some((u, down)) = queue.pop_front() {
        if std::mem::replace(&mut visited[u][down as usize], true) {
            continue;
        }
        if !observed[u] && targets.contains(&u) && !xs.contains(&u) {
            return false;
        }
        if !down {
            if !observed[u] {
                queue.extend(net.parents(u).iter().map(|&p| (p, false)));
                queue.extend(net.children(u).iter().map(|&c| (c, true)));
            }
        } else {
            if !observed[u] {
                queue.extend(net.children(u).iter().map(|&c| (c, true)));
            }
            if anc[u] {
                queue.extend(net.parents(u).iter().map(|&p| (p, false)));
            }
        }
    }
    true
}
