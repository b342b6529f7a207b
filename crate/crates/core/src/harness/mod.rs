//! Experiment runner: many (policy, seed) episodes over one scenario,
//! written out as per-run CSV logs plus an aggregate summary.

mod baselines;
mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::AifParams;
use crate::error::{HarnessError, ScenarioError};
use crate::scenario::{AgentKind, Scenario};
use crate::sim::{run_episode, Agent, EpisodeLog, EpisodeOptions, CSV_VERSION};

pub use baselines::{make_agent, OracleGreedyAgent, RandomAgent, StaticAgent, ThresholdAgent};
pub use metrics::{
    decile_means, paired_comparison, recovery_time, run_lengths, service_series, Comparison, Recovery, Stats,
};

pub const SUMMARY_VERSION: u32 = 1;
pub const OUTPUT_ROOT_ENV: &str = "CCSIM_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentEntry {
    Name(String),
    Spec {
        #[serde(default)]
        label: Option<String>,
        kind: String,
        #[serde(default)]
        exchange: Option<bool>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsToggles {
    /// Wall-clock decision times, written to `timing.json`.
    #[serde(default)]
    pub timing: bool,
    /// Per-action expected free energy in the CSV logs.
    #[serde(default)]
    pub efe: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: PathBuf,
    pub agents: Vec<AgentEntry>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub metrics: MetricsToggles,
    /// Applied to the Active Inference parameters of every binding.
    #[serde(default)]
    pub overrides: BTreeMap<String, toml::Value>,
    #[serde(default = "default_window")]
    pub recovery_window: usize,
    #[serde(default = "default_tolerance")]
    pub recovery_tolerance: f64,
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_window() -> usize {
    20
}

fn default_tolerance() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config file; a relative scenario path is resolved against
    /// the file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.scenario.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.scenario = dir.join(&cfg.scenario);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// One policy under test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunAgent {
    pub label: String,
    /// `None` uses the kinds bound in the scenario.
    pub kind: Option<AgentKind>,
    pub exchange: bool,
}

impl RunAgent {
    pub fn new(kind: AgentKind, exchange: bool) -> Self {
        Self {
            label: kind.name().to_string(),
            kind: Some(kind),
            exchange,
        }
    }

    fn resolve(entry: &AgentEntry, sc: &Scenario) -> Result<Self, HarnessError> {
        let (label, kind, exchange) = match entry {
            AgentEntry::Name(k) => (None, k.as_str(), None),
            AgentEntry::Spec { label, kind, exchange } => (label.clone(), kind.as_str(), *exchange),
        };
        let parsed = match kind {
            "scenario" => None,
            k => Some(AgentKind::parse(k).ok_or_else(|| HarnessError::Config(format!("unknown agent kind `{k}`")))?),
        };
        let label = label.unwrap_or_else(|| kind.to_string());
        if label.is_empty()
            || !label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '+'))
        {
            return Err(HarnessError::Config(format!("invalid agent label `{label}`")));
        }
        Ok(Self {
            label,
            kind: parsed,
            exchange: exchange.unwrap_or(sc.coordination.exchange),
        })
    }
}

/// Validated experiment, ready to run.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub agents: Vec<RunAgent>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self, HarnessError> {
        let mut scenario = Scenario::from_path(&config.scenario)?;
        apply_overrides(&mut scenario, &config.overrides)?;
        Self::with_scenario(config, scenario)
    }

    pub fn with_scenario(config: ExperimentConfig, scenario: Scenario) -> Result<Self, HarnessError> {
        if config.agents.is_empty() {
            return Err(HarnessError::Config("no agents listed".into()));
        }
        if config.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds listed".into()));
        }
        let unique: BTreeSet<u64> = config.seeds.iter().copied().collect();
        if unique.len() != config.seeds.len() {
            return Err(HarnessError::Config("duplicate seeds".into()));
        }
        if config.recovery_window == 0 {
            return Err(HarnessError::Config("recovery_window must be >= 1".into()));
        }
        let agents = config
            .agents
            .iter()
            .map(|e| RunAgent::resolve(e, &scenario))
            .collect::<Result<Vec<_>, _>>()?;
        let labels: BTreeSet<&str> = agents.iter().map(|a| a.label.as_str()).collect();
        if labels.len() != agents.len() {
            return Err(HarnessError::Config("duplicate agent labels".into()));
        }
        Ok(Self {
            config,
            scenario,
            agents,
        })
    }

    /// Runs every (agent, seed) pair in parallel. With `out_dir`, writes
    /// `<label>_seed<k>.csv` per run, `summary.json` and, when timing is on,
    /// `timing.json`.
    pub fn run(&self, out_dir: Option<&Path>) -> Result<ExperimentSummary, HarnessError> {
        let opts = EpisodeOptions {
            exchange: false,
            record_efe: self.config.metrics.efe,
            timing: self.config.metrics.timing,
        };
        let jobs: Vec<(&RunAgent, u64)> = self
            .agents
            .iter()
            .flat_map(|a| self.config.seeds.iter().map(move |&s| (a, s)))
            .collect();
        let logs: Vec<EpisodeLog> = jobs
            .par_iter()
            .map(|(agent, seed)| {
                run_single(
                    &self.scenario,
                    agent,
                    *seed,
                    EpisodeOptions {
                        exchange: agent.exchange,
                        ..opts
                    },
                )
            })
            .collect::<Result<_, _>>()?;

        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            for ((agent, seed), log) in jobs.iter().zip(&logs) {
                let path = dir.join(format!("{}_seed{}.csv", agent.label, seed));
                fs::write(&path, log.to_csv()).map_err(|e| HarnessError::io(&path, e))?;
            }
        }
        let runs: Vec<RunSummary> = jobs
            .iter()
            .zip(&logs)
            .map(|((agent, _), log)| summarize(&self.scenario, agent, log, &self.config))
            .collect();
        let summary = ExperimentSummary::new(&self.scenario, &self.config, &self.agents, runs);
        if let Some(dir) = out_dir {
            let path = dir.join("summary.json");
            fs::write(&path, summary.to_json()).map_err(|e| HarnessError::io(&path, e))?;
            if self.config.metrics.timing {
                let timing = timing_report(&jobs, &logs);
                let path = dir.join("timing.json");
                let text = serde_json::to_string_pretty(&timing).expect("timing serializes");
                fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
            }
        }
        Ok(summary)
    }
}

/// Sets Active Inference hyperparameters on every binding.
pub fn apply_overrides(sc: &mut Scenario, overrides: &BTreeMap<String, toml::Value>) -> Result<(), HarnessError> {
    if overrides.is_empty() {
        return Ok(());
    }
    for b in &mut sc.bindings {
        let mut value = serde_json::to_value(&b.aif).expect("params serialize");
        for (k, v) in overrides {
            let obj = value.as_object_mut().expect("params are an object");
            if !obj.contains_key(k) {
                return Err(HarnessError::Config(format!("unknown parameter `{k}`")));
            }
            obj.insert(
                k.clone(),
                serde_json::to_value(v).map_err(|e| HarnessError::Config(e.to_string()))?,
            );
        }
        let params: AifParams =
            serde_json::from_value(value).map_err(|e| HarnessError::Config(format!("overrides: {e}")))?;
        params
            .validate()
            .map_err(|r| HarnessError::Config(format!("overrides: {r}")))?;
        b.aif = params;
    }
    Ok(())
}

/// One episode of `scenario` under `agent` with the root seed replaced.
pub fn run_single(
    scenario: &Scenario,
    agent: &RunAgent,
    seed: u64,
    opts: EpisodeOptions,
) -> Result<EpisodeLog, ScenarioError> {
    let mut sc = scenario.clone();
    sc.seed = seed;
    let sc = Arc::new(sc);
    let agents = sc
        .bindings
        .iter()
        .map(|b| make_agent(&sc, &b.service, agent.kind.unwrap_or(b.agent), agent.exchange))
        .collect::<Result<Vec<Box<dyn Agent>>, _>>()?;
    run_episode(sc, agents, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub fulfillment_rate: f64,
    pub per_service: BTreeMap<String, f64>,
    /// Steps with at least one violated SLO.
    pub violation_steps: u64,
    /// Lengths of consecutive runs of steps with a violated SLO.
    pub violation_runs: Vec<u64>,
    pub rejected_actions: u64,
    pub agent_errors: u64,
    pub mean_surprise: Option<f64>,
    /// Mean per-step surprise over ten equal windows of the horizon.
    pub surprise_by_decile: Vec<Option<f64>>,
    pub recoveries: Vec<Recovery>,
    pub action_counts: BTreeMap<String, u64>,
}

fn summarize(sc: &Scenario, agent: &RunAgent, log: &EpisodeLog, cfg: &ExperimentConfig) -> RunSummary {
    let per_service: BTreeMap<String, f64> = sc
        .service_order()
        .into_iter()
        .map(|s| {
            let series = service_series(log, &s);
            let rate = series.iter().sum::<f64>() / series.len().max(1) as f64;
            (s, rate)
        })
        .collect();
    let mut action_counts: BTreeMap<String, u64> = BTreeMap::new();
    let (mut rejected, mut errors) = (0, 0);
    let mut surprises = Vec::new();
    let mut step_surprise = Vec::new();
    for r in &log.records {
        let before = surprises.len();
        for a in &r.agents {
            *action_counts.entry(a.action.label().to_string()).or_default() += 1;
            rejected += u64::from(a.rejected.is_some());
            errors += u64::from(a.error.is_some());
            if let Some(s) = a.surprise.filter(|s| s.is_finite()) {
                surprises.push(s);
            }
        }
        let new = &surprises[before..];
        if !new.is_empty() {
            step_surprise.push((r.t, new.iter().sum::<f64>() / new.len() as f64));
        }
    }
    let violated: Vec<bool> = log
        .records
        .iter()
        .map(|r| r.agents.iter().any(|a| a.slos.iter().any(|s| !s.1)))
        .collect();
    let violation_steps = violated.iter().filter(|v| **v).count() as u64;
    let mut events: Vec<(u64, String)> = sc
        .slo_schedule
        .iter()
        .map(|c| (c.t, c.service.clone()))
        .collect();
    events.sort();
    events.dedup();
    let recoveries = events
        .into_iter()
        .filter_map(|(t, service)| {
            let series = service_series(log, &service);
            recovery_time(&series, t as usize, cfg.recovery_window, cfg.recovery_tolerance).map(
                |(pre, steps)| Recovery {
                    event_t: t,
                    service,
                    pre_level: pre,
                    steps,
                },
            )
        })
        .collect();
    RunSummary {
        label: agent.label.clone(),
        seed: log.seed,
        fulfillment_rate: log.fulfillment_rate(),
        per_service,
        violation_steps,
        violation_runs: run_lengths(&violated),
        rejected_actions: rejected,
        agent_errors: errors,
        mean_surprise: (!surprises.is_empty()).then(|| surprises.iter().sum::<f64>() / surprises.len() as f64),
        surprise_by_decile: decile_means(&step_surprise, log.horizon),
        recoveries,
        action_counts,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub fulfillment: Stats,
    pub recovered: usize,
    pub not_recovered: usize,
    pub recovery_steps: Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub csv_version: u32,
    pub summary_version: u32,
    pub scenario: String,
    /// FNV-1a digest of the normalized scenario text.
    pub scenario_digest: String,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub agents: Vec<RunAgent>,
    pub recovery_window: usize,
    pub runs: Vec<RunSummary>,
    pub aggregates: BTreeMap<String, Aggregate>,
}

impl ExperimentSummary {
    fn new(sc: &Scenario, cfg: &ExperimentConfig, agents: &[RunAgent], runs: Vec<RunSummary>) -> Self {
        let mut aggregates = BTreeMap::new();
        for a in agents {
            let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.label == a.label).collect();
            let rates: Vec<f64> = mine.iter().map(|r| r.fulfillment_rate).collect();
            let recs: Vec<&Recovery> = mine.iter().flat_map(|r| &r.recoveries).collect();
            let steps: Vec<f64> = recs.iter().filter_map(|r| r.steps.map(|s| s as f64)).collect();
            aggregates.insert(
                a.label.clone(),
                Aggregate {
                    fulfillment: Stats::of(&rates),
                    recovered: steps.len(),
                    not_recovered: recs.len() - steps.len(),
                    recovery_steps: Stats::of(&steps),
                },
            );
        }
        Self {
            csv_version: CSV_VERSION,
            summary_version: SUMMARY_VERSION,
            scenario: sc.name.clone(),
            scenario_digest: format!("{:016x}", fnv1a(sc.to_toml().as_bytes())),
            horizon: sc.horizon,
            seeds: cfg.seeds.clone(),
            agents: agents.to_vec(),
            recovery_window: cfg.recovery_window,
            runs,
            aggregates,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("summary: {e}")))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Fulfilment rate per seed for one label.
    pub fn rates(&self, label: &str) -> BTreeMap<u64, f64> {
        self.runs
            .iter()
            .filter(|r| r.label == label)
            .map(|r| (r.seed, r.fulfillment_rate))
            .collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Paired comparison of `label_a` in `a` against `label_b` in `b`. Both
/// summaries must share format versions, scenario and seed set.
pub fn compare(
    a: &ExperimentSummary,
    label_a: &str,
    b: &ExperimentSummary,
    label_b: &str,
) -> Result<Comparison, HarnessError> {
    for s in [a, b] {
        if s.summary_version != SUMMARY_VERSION {
            return Err(HarnessError::VersionMismatch {
                found: s.summary_version,
                expected: SUMMARY_VERSION,
            });
        }
        if s.csv_version != CSV_VERSION {
            return Err(HarnessError::VersionMismatch {
                found: s.csv_version,
                expected: CSV_VERSION,
            });
        }
    }
    if a.scenario_digest != b.scenario_digest {
        return Err(HarnessError::ScenarioMismatch(a.scenario.clone(), b.scenario.clone()));
    }
    let ra = a.rates(label_a);
    let rb = b.rates(label_b);
    if ra.is_empty() {
        return Err(HarnessError::Config(format!("no runs labelled `{label_a}`")));
    }
    if rb.is_empty() {
        return Err(HarnessError::Config(format!("no runs labelled `{label_b}`")));
    }
    if ra.keys().ne(rb.keys()) {
        return Err(HarnessError::SeedMismatch);
    }
    Ok(paired_comparison(label_a, &ra, label_b, &rb))
}

/// Runs the experiment once per value of an Active Inference parameter,
/// writing each run set under `<out_dir>/<param>=<value>/`.
pub fn sweep(
    config: &ExperimentConfig,
    param: &str,
    values: &[String],
    out_dir: Option<&Path>,
) -> Result<Vec<(String, ExperimentSummary)>, HarnessError> {
    let mut out = Vec::new();
    for v in values {
        let mut cfg = config.clone();
        let parsed: toml::Value = v
            .parse::<i64>()
            .map(toml::Value::Integer)
            .or_else(|_| v.parse::<f64>().map(toml::Value::Float))
            .or_else(|_| v.parse::<bool>().map(toml::Value::Boolean))
            .unwrap_or_else(|_| toml::Value::String(v.clone()));
        cfg.overrides.insert(param.to_string(), parsed);
        let exp = Experiment::prepare(cfg)?;
        let dir = out_dir.map(|d| d.join(format!("{param}={v}")));
        out.push((v.clone(), exp.run(dir.as_deref())?));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub decisions: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

/// Decision-time statistics per label, pooled over seeds and agents.
pub fn timing_report(jobs: &[(&RunAgent, u64)], logs: &[EpisodeLog]) -> BTreeMap<String, TimingEntry> {
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((agent, _), log) in jobs.iter().zip(logs) {
        let v = pooled.entry(agent.label.clone()).or_default();
        for ms in log.decision_ms.values() {
            v.extend(ms);
        }
    }
    pooled
        .into_iter()
        .map(|(label, mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let p95 = if n == 0 { 0.0 } else { v[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1] };
            (
                label,
                TimingEntry {
                    decisions: n,
                    mean_ms: if n == 0 { 0.0 } else { v.iter().sum::<f64>() / n as f64 },
                    p95_ms: p95,
                    max_ms: v.last().copied().unwrap_or(0.0),
                },
            )
        })
        .collect()
}
