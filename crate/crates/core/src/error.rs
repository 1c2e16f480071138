use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building or validating a [`crate::network::PowerSystem`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("bus ids must be contiguous from 0, found id {found} at position {position}")]
    NonContiguousBus { position: usize, found: usize },
    #[error("line {line}: {reason}")]
    InvalidLine { line: usize, reason: String },
    #[error("generator {generator}: {reason}")]
    InvalidGenerator { generator: usize, reason: String },
    #[error("bus {0} is not touched by any line")]
    IsolatedBus(usize),
    #[error("contingency refers to unknown generator {0}")]
    UnknownContingency(usize),
    #[error("slack bus {0} does not exist")]
    UnknownSlack(usize),
    #[error("reduced susceptance matrix is singular (network is islanded)")]
    SingularNetwork,
}

/// Errors raised while reading case files and run configuration.
#[derive(Debug, Error)]
pub enum CaseError {
    #[error("malformed case: {0}")]
    MalformedCase(String),
    #[error("unsupported case: {0}")]
    UnsupportedCase(String),
    #[error("islanded network: {0}")]
    IslandedNetwork(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CaseError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CaseError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Errors surfaced by the MILP/LP backend layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("solver backend `{0}` is not available")]
    BackendUnavailable(String),
    #[error("unknown solver parameter `{0}`")]
    UnknownParameter(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("model build error: {0}")]
    ModelBuild(String),
    #[error("backend error: {0}")]
    Backend(String),
}

/// Errors raised by the screening routine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScreenError {
    #[error("dispatch for contingency {contingency} is unbalanced by {imbalance_mw} MW")]
    UnbalancedDispatch {
        contingency: usize,
        imbalance_mw: f64,
    },
    #[error(
        "dispatch vector for contingency {contingency} has {found} entries, expected {expected}"
    )]
    DimensionMismatch {
        contingency: usize,
        found: usize,
        expected: usize,
    },
}

/// Errors returned by the solution methods.
#[derive(Debug, Error)]
pub enum MethodError {
    #[error("no N-1 compliant dispatch exists")]
    Infeasible,
    #[error("time limit reached")]
    TimeLimit,
    #[error(
        "primary response cannot balance contingency {contingency} (residual {residual_mw} MW)"
    )]
    ResponseInfeasible {
        contingency: usize,
        residual_mw: f64,
    },
    #[error("feasibility cut for contingency {contingency} does not separate the incumbent")]
    NonconvergentCut { contingency: usize },
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Screen(#[from] ScreenError),
}

/// Errors raised by the bound monitor.
#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("percentage {0} outside [0, 100]")]
    InvalidPercent(f64),
    #[error(transparent)]
    Config(#[from] CaseError),
}
