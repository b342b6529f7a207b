//! Service pipelines, SLOs, workload traces and the analytic metric model.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::infrastructure::NodeSpec;
use crate::rng::SimRng;

/// The four metrics a service emits each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LatencyMs,
    ThroughputRps,
    EnergyJ,
    QualityLevel,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::LatencyMs,
        Metric::ThroughputRps,
        Metric::EnergyJ,
        Metric::QualityLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::LatencyMs => "latency_ms",
            Metric::ThroughputRps => "throughput_rps",
            Metric::EnergyJ => "energy_j",
            Metric::QualityLevel => "quality_level",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::LatencyMs => "ms",
            Metric::ThroughputRps => "rps",
            Metric::EnergyJ => "J",
            Metric::QualityLevel => "level",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slo {
    pub id: String,
    /// Filled from the enclosing service when the scenario is loaded.
    #[serde(default)]
    pub service: String,
    pub metric: Metric,
    pub comparator: Comparator,
    pub threshold: f64,
    /// Optional explicit unit; must match the metric's unit when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Boundary values count as fulfilled.
pub fn evaluate_slo(slo: &Slo, value: f64) -> bool {
    match slo.comparator {
        Comparator::AtMost => value <= slo.threshold,
        Comparator::AtLeast => value >= slo.threshold,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    /// Ordered from cheapest to highest quality.
    pub levels: Vec<String>,
    /// Multiplier on compute demand per request, one per level.
    pub demand_factors: Vec<f64>,
    /// Multiplier on base latency, one per level.
    pub latency_factors: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
}

impl ParamSpec {
    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }

    pub fn initial_index(&self) -> usize {
        self.initial
            .as_deref()
            .and_then(|l| self.level_index(l))
            .unwrap_or(0)
    }
}

/// How the level of an upstream parameter scales this service's work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFactor {
    pub upstream: String,
    pub param: String,
    /// Multiplier on demand and base latency, one per upstream level.
    pub factors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub id: String,
    #[serde(default)]
    pub upstream: Vec<String>,
    /// Initial host.
    pub node: String,
    #[serde(default = "one_u32")]
    pub replicas: u32,
    #[serde(default = "one_u32")]
    pub min_replicas: u32,
    #[serde(default = "eight")]
    pub max_replicas: u32,
    /// Compute units per request at reference parameter levels.
    pub demand_per_request: f64,
    /// Latency in ms at zero contention and reference levels.
    pub base_latency_ms: f64,
    /// Compute units one replica can process per step.
    pub replica_capacity: f64,
    #[serde(default)]
    pub gpu_required: bool,
    #[serde(default)]
    pub payload_kb: f64,
    /// Share of the application request rate reaching this service.
    #[serde(default = "one")]
    pub load_factor: f64,
    /// Parameter whose level is reported as `quality_level`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_param: Option<String>,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub input_factors: Vec<InputFactor>,
    #[serde(default)]
    pub slos: Vec<Slo>,
}

fn one_u32() -> u32 {
    1
}

fn eight() -> u32 {
    8
}

impl ServiceSpec {
    pub fn param(&self, name: &str) -> Option<(usize, &ParamSpec)> {
        self.params.iter().enumerate().find(|(_, p)| p.name == name)
    }

    pub fn initial_levels(&self) -> Vec<usize> {
        self.params.iter().map(ParamSpec::initial_index).collect()
    }

    /// Compute units per request for the given parameter levels and
    /// upstream input multiplier.
    pub fn demand(&self, levels: &[usize], input_multiplier: f64) -> f64 {
        let factor: f64 = self
            .params
            .iter()
            .zip(levels)
            .map(|(p, &l)| p.demand_factors[l])
            .product();
        self.demand_per_request * factor * input_multiplier
    }

    pub fn base_latency(&self, levels: &[usize], input_multiplier: f64) -> f64 {
        let factor: f64 = self
            .params
            .iter()
            .zip(levels)
            .map(|(p, &l)| p.latency_factors[l])
            .product();
        self.base_latency_ms * factor * input_multiplier
    }

    pub fn quality_level(&self, levels: &[usize]) -> f64 {
        self.quality_param
            .as_deref()
            .and_then(|q| self.param(q))
            .map(|(i, _)| levels[i] as f64)
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    NoOp,
    /// Replica delta, always +1 or -1.
    Scale(i32),
    SetParam { name: String, level: usize },
    Migrate { node: String },
}

impl ActionKind {
    pub fn label(&self) -> &'static str {
        match self {
            ActionKind::NoOp => "noop",
            ActionKind::Scale(_) => "scale",
            ActionKind::SetParam { .. } => "set_param",
            ActionKind::Migrate { .. } => "migrate",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::NoOp => f.write_str("noop"),
            ActionKind::Scale(d) => write!(f, "scale:{d:+}"),
            ActionKind::SetParam { name, level } => write!(f, "set:{name}={level}"),
            ActionKind::Migrate { node } => write!(f, "migrate:{node}"),
        }
    }
}

impl FromStr for ActionKind {
    type Err = String;

    /// Accepts `noop`, `scale:+1`, `scale:-1`, `set:<param>=<level index>`
    /// and `migrate:<node>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "noop" || s == "no_op" {
            return Ok(ActionKind::NoOp);
        }
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("malformed action `{s}`"))?;
        match head {
            "scale" => match rest {
                "+1" | "1" => Ok(ActionKind::Scale(1)),
                "-1" => Ok(ActionKind::Scale(-1)),
                _ => Err(format!("scale delta must be +1 or -1 in `{s}`")),
            },
            "set" => {
                let (name, level) = rest
                    .split_once('=')
                    .ok_or_else(|| format!("malformed set action `{s}`"))?;
                let level = level
                    .parse()
                    .map_err(|_| format!("set level must be an index in `{s}`"))?;
                Ok(ActionKind::SetParam {
                    name: name.to_string(),
                    level,
                })
            }
            "migrate" if !rest.is_empty() => Ok(ActionKind::Migrate {
                node: rest.to_string(),
            }),
            _ => Err(format!("unknown action `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub issuer: String,
    pub target: String,
    pub kind: ActionKind,
}

impl Action {
    pub fn new(issuer: impl Into<String>, target: impl Into<String>, kind: ActionKind) -> Self {
        Self {
            issuer: issuer.into(),
            target: target.into(),
            kind,
        }
    }

    pub fn noop(issuer: &str, target: &str) -> Self {
        Self::new(issuer, target, ActionKind::NoOp)
    }
}

impl PartialOrd for Action {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Actions order by kind first, which is the tie-break order used when
/// scores are equal.
impl Ord for Action {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then_with(|| self.target.cmp(&other.target))
            .then_with(|| self.issuer.cmp(&other.issuer))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Requests per second at t = 0 ignoring the periodic term.
    pub base_rate: f64,
    #[serde(default)]
    pub diurnal_amplitude: f64,
    #[serde(default = "default_period")]
    pub period: u64,
    #[serde(default)]
    pub drift_per_step: f64,
    #[serde(default)]
    pub noise_sd: f64,
}

fn default_period() -> u64 {
    100
}

/// Request rate at step `t`, clamped at zero. One standard-normal draw is
/// consumed per call even when `noise_sd` is zero.
pub fn workload_rate(spec: &WorkloadSpec, t: u64, rng: &mut SimRng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let phase = 2.0 * std::f64::consts::PI * t as f64 / spec.period as f64;
    let rate = spec.base_rate
        + spec.diurnal_amplitude * spec.base_rate * phase.sin()
        + spec.drift_per_step * t as f64
        + spec.noise_sd * z;
    rate.max(0.0)
}

/// Constants of the analytic latency model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    /// Upper bound on the contention multiplier.
    #[serde(default = "default_saturation")]
    pub saturation: f64,
    /// Slowdown for GPU-requiring services on GPU-less hosts.
    #[serde(default = "default_gpu_penalty")]
    pub gpu_penalty: f64,
    /// Sigma of the multiplicative lognormal noise.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Payloads above this size pay a bandwidth transfer surcharge.
    #[serde(default)]
    pub payload_threshold_kb: f64,
}

fn default_saturation() -> f64 {
    50.0
}

fn default_gpu_penalty() -> f64 {
    3.0
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            saturation: default_saturation(),
            gpu_penalty: default_gpu_penalty(),
            noise_sigma: 0.0,
            payload_threshold_kb: 0.0,
        }
    }
}

/// Everything the metric model needs to know about one service in one step.
#[derive(Clone, Copy, Debug)]
pub struct ServiceLoad<'a> {
    pub spec: &'a ServiceSpec,
    pub levels: &'a [usize],
    pub input_multiplier: f64,
    pub load_rps: f64,
    pub host: &'a NodeSpec,
    pub host_utilization: f64,
    pub upstream_latency_ms: f64,
    pub link_latency_ms: f64,
    pub replicas: u32,
}

impl ServiceLoad<'_> {
    pub fn demand_per_request(&self) -> f64 {
        self.spec.demand(self.levels, self.input_multiplier)
    }

    /// Utilization of a single replica; load is split evenly.
    pub fn replica_utilization(&self) -> f64 {
        if self.replicas == 0 {
            return f64::INFINITY;
        }
        self.load_rps / f64::from(self.replicas) * self.demand_per_request()
            / self.spec.replica_capacity
    }

    /// Utilization driving contention: the busier of the replica and its host.
    pub fn effective_utilization(&self) -> f64 {
        self.replica_utilization().max(self.host_utilization)
    }
}

impl LatencyModel {
    /// `1/(1-u)` capped at the saturation constant; overload maps to the cap.
    pub fn contention(&self, u: f64) -> f64 {
        if u >= 1.0 {
            self.saturation
        } else {
            (1.0 / (1.0 - u)).min(self.saturation)
        }
    }

    /// Latency without the noise factor.
    pub fn expected_latency(&self, s: &ServiceLoad<'_>) -> f64 {
        if s.replicas == 0 {
            return f64::INFINITY;
        }
        let gpu = if s.spec.gpu_required && s.host.gpu_units == 0 {
            self.gpu_penalty
        } else {
            1.0
        };
        s.upstream_latency_ms
            + s.link_latency_ms
            + s.spec.base_latency(s.levels, s.input_multiplier)
                * self.contention(s.effective_utilization())
                * gpu
    }

    /// Latency including the multiplicative lognormal noise. One normal draw
    /// is consumed whether or not the service is placed.
    pub fn latency(&self, s: &ServiceLoad<'_>, rng: &mut SimRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.latency_with_noise(s, (self.noise_sigma * z).exp())
    }

    pub fn latency_with_noise(&self, s: &ServiceLoad<'_>, noise: f64) -> f64 {
        if s.replicas == 0 {
            return f64::INFINITY;
        }
        let own = self.expected_latency(s) - s.upstream_latency_ms - s.link_latency_ms;
        s.upstream_latency_ms + s.link_latency_ms + own * noise
    }

    /// Served request rate: offered load capped by what the replicas can
    /// process, reduced further when the host is overloaded.
    pub fn throughput(&self, s: &ServiceLoad<'_>) -> f64 {
        if s.replicas == 0 {
            return 0.0;
        }
        let demand = s.demand_per_request();
        if demand <= 0.0 {
            return s.load_rps;
        }
        let capacity = f64::from(s.replicas) * s.spec.replica_capacity / demand;
        s.load_rps.min(capacity / s.host_utilization.max(1.0))
    }

    /// Energy per step: consumed compute units times the host coefficient.
    pub fn energy(&self, s: &ServiceLoad<'_>) -> f64 {
        self.throughput(s) * s.demand_per_request() * s.host.energy_coefficient
    }

    /// Transfer surcharge in ms for sending one payload over a path with the
    /// given bottleneck bandwidth.
    pub fn transfer_ms(&self, payload_kb: f64, bottleneck_mbps: f64) -> f64 {
        if payload_kb > self.payload_threshold_kb && bottleneck_mbps.is_finite() {
            payload_kb * 8.0 / bottleneck_mbps
        } else {
            0.0
        }
    }
}
