use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter {name} = {value} violates: {constraint}")]
    InvalidParam {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },
    #[error("{name} must be > 0, got {value}")]
    NonPositiveRating { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("network has no buses")]
    Empty,
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("unknown bus id {0}")]
    UnknownBus(u32),
    #[error("unknown load id {0:?}")]
    UnknownLoad(String),
    #[error("duplicate load id {0:?}")]
    DuplicateLoad(String),
    #[error("{element}: {constraint} (got {value})")]
    InvalidElement {
        element: String,
        constraint: &'static str,
        value: f64,
    },
    #[error("bus {0} is not connected to bus {1} through any line")]
    Disconnected(u32, u32),
    #[error("admittance matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("expected {expected} injections, got {got}")]
    InjectionLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("agent index {0} out of range")]
    AgentOutOfRange(usize),
    #[error("agent {0} appears in more than one zone")]
    DuplicateAgent(usize),
    #[error("agent {0} is not assigned to any zone")]
    Unassigned(usize),
    #[error("zone {0} is empty")]
    EmptyZone(usize),
    #[error("expected one leader per zone ({zones} zones, {leaders} leaders)")]
    LeaderCount { zones: usize, leaders: usize },
    #[error("leader {leader} is not a member of zone {zone}")]
    LeaderOutsideZone { leader: usize, zone: usize },
    #[error("edge {from} -> {to} crosses a zone boundary")]
    CrossZoneEdge { from: usize, to: usize },
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("{what} for agent {agent} must be {constraint}, got {value}")]
    InvalidGain {
        what: &'static str,
        agent: usize,
        constraint: &'static str,
        value: f64,
    },
    #[error("agent {agent} in zone {zone} is unreachable from every pinned agent")]
    Unreachable { agent: usize, zone: usize },
    #[error("expected {expected} entries for {what}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("state became non-finite in channel {channel} at t = {t}")]
    NonFinite { channel: String, t: f64 },
    #[error(
        "equilibrium solve did not converge after {iterations} iterations: \
         residual {residual:e} (worst channel {channel})"
    )]
    Equilibrium {
        iterations: usize,
        residual: f64,
        channel: String,
    },
    #[error("unknown log channel {0:?}")]
    UnknownChannel(String),
    #[error("settling band must be > 0, got {0}")]
    InvalidBand(f64),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{key}: {constraint}")]
    Invalid { key: String, constraint: String },
}

impl ScenarioError {
    pub(crate) fn invalid(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}
