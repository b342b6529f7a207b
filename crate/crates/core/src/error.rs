use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfraError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("invalid node `{node}`: {reason}")]
    InvalidNode { node: String, reason: String },
    #[error("invalid link {a}-{b}: {reason}")]
    InvalidLink { a: String, b: String, reason: String },
    #[error("topology is not connected (`{0}` unreachable)")]
    Disconnected(String),
    #[error("edge node `{edge}` capacity {edge_capacity} is not below cloud node `{cloud}` capacity {cloud_capacity}")]
    Heterogeneity {
        edge: String,
        edge_capacity: f64,
        cloud: String,
        cloud_capacity: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported format_version {0} (expected 1)")]
    Version(u32),
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("{kind} `{id}` referenced by {context} does not exist")]
    Dangling {
        kind: &'static str,
        id: String,
        context: String,
    },
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Infra(#[from] InfraError),
}

impl ScenarioError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesNetError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{name}` has invalid cardinality {cardinality}")]
    Cardinality { name: String, cardinality: usize },
    #[error("value {value} out of range for `{name}` (cardinality {cardinality})")]
    OutOfRange {
        name: String,
        value: usize,
        cardinality: usize,
    },
    #[error("graph contains a cycle through `{0}`")]
    Cycle(String),
    #[error("table for `{name}` has {got} entries, expected {expected}")]
    TableShape {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("invalid probability table for `{0}`")]
    InvalidTable(String),
    #[error("evidence has zero probability under the model")]
    ImpossibleEvidence,
    #[error("query and evidence overlap on `{0}`")]
    QueryEvidenceOverlap(String),
    #[error("assignment is missing variable `{0}`")]
    Incomplete(String),
    #[error("joint table of {0} entries exceeds the enumeration bound")]
    TooLarge(u128),
    #[error("no data to learn from")]
    EmptyData,
    #[error("max_parents {0} exceeds the supported bound of 3")]
    MaxParents(usize),
    #[error("binning for `{0}` must have strictly increasing finite cut points")]
    Binning(String),
    #[error("malformed network document: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositionError {
    #[error("cardinality mismatch in identified class {class}: {a} has {ka}, {b} has {kb}")]
    CardinalityMismatch {
        class: String,
        a: String,
        ka: usize,
        b: String,
        kb: usize,
    },
    #[error("merging identified variables introduces a cycle through class `{0}`")]
    Cycle(String),
    #[error("unknown model or variable `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Net(#[from] BayesNetError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("seed sets differ between summaries")]
    SeedMismatch,
    #[error("summary format version {found} does not match {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("summaries come from different scenarios ({0} vs {1})")]
    ScenarioMismatch(String, String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
