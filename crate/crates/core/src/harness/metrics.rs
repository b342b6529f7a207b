use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::EpisodeLog;

/// Fulfilment of one service's SLOs after an SLO change at `event_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub event_t: u64,
    pub service: String,
    pub pre_level: f64,
    /// Steps until the windowed rate is back at the pre-change level;
    /// `None` means not recovered within the episode.
    pub steps: Option<u64>,
}

/// Per-step weighted SLO fulfilment of one service.
pub fn service_series(log: &EpisodeLog, service: &str) -> Vec<f64> {
    log.records
        .iter()
        .map(|r| {
            r.agents
                .iter()
                .find(|a| a.service == service)
                .map(|a| {
                    let total: f64 = a.slos.iter().map(|s| s.2).sum();
                    let ok: f64 = a.slos.iter().filter(|s| s.1).map(|s| s.2).sum();
                    if total > 0.0 {
                        ok / total
                    } else {
                        1.0
                    }
                })
                .unwrap_or(1.0)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// First `k >= 0` such that the mean of `series[e+k .. e+k+w]` reaches the
/// mean of `series[e-w .. e]` minus `tolerance`. `None` when no full window
/// after the event qualifies, or when there is no full window before it.
pub fn recovery_time(series: &[f64], event: usize, w: usize, tolerance: f64) -> Option<(f64, Option<u64>)> {
    if w == 0 || event < w || event > series.len() {
        return None;
    }
    let pre = mean(&series[event - w..event]);
    let steps = (event..=series.len().saturating_sub(w))
        .find(|&s| mean(&series[s..s + w]) >= pre - tolerance - 1e-12)
        .map(|s| (s - event) as u64);
    Some((pre, steps))
}

/// Lengths of the maximal runs of `true`, in order of occurrence.
pub fn run_lengths(flags: &[bool]) -> Vec<u64> {
    let mut out = Vec::new();
    let mut cur = 0;
    for &f in flags {
        if f {
            cur += 1;
        } else if cur > 0 {
            out.push(cur);
            cur = 0;
        }
    }
    if cur > 0 {
        out.push(cur);
    }
    out
}

/// Means of `values` over ten equal step windows of `0..horizon`; window `i`
/// covers `[i*h/10, (i+1)*h/10)`. Empty windows give `None`.
pub fn decile_means(values: &[(u64, f64)], horizon: u64) -> Vec<Option<f64>> {
    let mut sums = [(0.0, 0usize); 10];
    for &(t, v) in values {
        if t < horizon {
            let i = ((t * 10) / horizon.max(1)) as usize;
            sums[i].0 += v;
            sums[i].1 += 1;
        }
    }
    sums.iter().map(|&(s, n)| (n > 0).then(|| s / n as f64)).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Sample statistics; `sd` uses the `n - 1` denominator and is 0 for a
    /// single value.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let m = mean(xs);
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            mean: m,
            sd,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Paired per-seed differences `a - b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub diffs: BTreeMap<u64, f64>,
    pub mean: f64,
    pub sd: f64,
    pub a_better: usize,
    pub b_better: usize,
    pub ties: usize,
}

pub fn paired_comparison(
    label_a: &str,
    a: &BTreeMap<u64, f64>,
    label_b: &str,
    b: &BTreeMap<u64, f64>,
) -> Comparison {
    let diffs: BTreeMap<u64, f64> = a
        .iter()
        .filter_map(|(s, x)| b.get(s).map(|y| (*s, x - y)))
        .collect();
    let values: Vec<f64> = diffs.values().copied().collect();
    let st = Stats::of(&values);
    Comparison {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        mean: st.mean,
        sd: st.sd,
        a_better: values.iter().filter(|d| **d > 0.0).count(),
        b_better: values.iter().filter(|d| **d < 0.0).count(),
        ties: values.iter().filter(|d| **d == 0.0).count(),
        diffs,
    }
}
