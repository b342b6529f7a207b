use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::Preferences;
use crate::bayesnet::BayesNet;
use crate::error::BayesNetError;
use crate::rng::SimRng;
use crate::services::ActionKind;

/// Expected free energy of one candidate action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfeBreakdown {
    pub action: ActionKind,
    /// `-E_q[ln C(o)]`.
    pub pragmatic: f64,
    /// `-E_q[information gain]`, before scaling by beta.
    pub epistemic: f64,
    pub total: f64,
}

/// Expected reduction of uncertainty about the Dirichlet table parameters
/// of `vars` from observing the complete assignment `full`: the KL
/// divergence between the updated and the current Dirichlet, summed over
/// the one row per variable that the assignment touches.
pub fn information_gain(net: &BayesNet, vars: &[usize], full: &[usize]) -> f64 {
    vars.iter()
        .map(|&v| {
            let k = net.cardinality(v);
            let row = net.row_index(v, full);
            let counts = net.cpt(v).row_counts(row, k);
            let a0: f64 = counts.iter().sum();
            let aj = counts[full[v]];
            if aj <= 0.0 {
                return 0.0;
            }
            a0.ln() - aj.ln() + digamma(aj + 1.0) - digamma(a0 + 1.0)
        })
        .sum()
}

/// Pragmatic and epistemic terms for the predictive distribution implied by
/// `evidence`. Every variable not in the evidence is predicted.
pub fn policy_terms(
    net: &BayesNet,
    evidence: &[(usize, usize)],
    prefs: &Preferences,
) -> Result<(f64, f64), BayesNetError> {
    let mut clamped = vec![None; net.len()];
    for &(v, x) in evidence {
        clamped[v] = Some(x);
    }
    let query: Vec<usize> = (0..net.len()).filter(|&v| clamped[v].is_none()).collect();
    let pref_vars: Vec<(usize, &[f64])> = prefs
        .vars()
        .filter_map(|(name, c)| net.var(name).ok().map(|i| (i, c)))
        .collect();
    let dist = net.infer(&query, evidence)?;
    let mut full: Vec<usize> = clamped.iter().map(|x| x.unwrap_or(0)).collect();
    let (mut pragmatic, mut gain) = (0.0, 0.0);
    for (values, p) in dist.iter() {
        if p == 0.0 {
            continue;
        }
        for (&v, &x) in query.iter().zip(&values) {
            full[v] = x;
        }
        let ln_c: f64 = pref_vars.iter().map(|(v, c)| c[full[*v]]).sum();
        pragmatic -= p * ln_c;
        gain += p * information_gain(net, &query, &full);
    }
    Ok((pragmatic, -gain))
}

/// Softmax over `-total / tau`. Infinite totals get probability 0.
pub fn selection_probabilities(totals: &[f64], tau: f64) -> Vec<f64> {
    let min = totals
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return vec![1.0 / totals.len() as f64; totals.len()];
    }
    let w: Vec<f64> = totals
        .iter()
        .map(|&g| if g.is_finite() { (-(g - min) / tau).exp() } else { 0.0 })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Index of the selected action. With `tau == 0` this is the argmin of the
/// totals, ties resolved to the earliest entry (candidates come in action
/// order). Otherwise samples from [`selection_probabilities`].
pub fn select_action(breakdowns: &[EfeBreakdown], tau: f64, rng: &mut SimRng) -> usize {
    if tau <= 0.0 {
        let mut best = 0;
        for (i, b) in breakdowns.iter().enumerate().skip(1) {
            if b.total < breakdowns[best].total {
                best = i;
            }
        }
        return best;
    }
    let totals: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
    let probs = selection_probabilities(&totals, tau);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
