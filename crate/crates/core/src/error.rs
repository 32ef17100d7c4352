use thiserror::Error;

/// Errors raised while building or evaluating a network.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("coordinate {coord} = {value} outside open domain ({lower}, {upper})")]
    DomainViolation {
        coord: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("gradient value {value} at coordinate {coord} has no preimage in the domain")]
    NoPreimage { coord: usize, value: f64 },

    #[error("algebraic node {node} is inconsistent: {reason}")]
    AlgebraicInconsistency { node: usize, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("node {node}: {reason}")]
    InvalidNode { node: usize, reason: String },

    #[error("invalid energy function: {0}")]
    InvalidEnergy(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid controller: {0}")]
    InvalidController(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("step size underflow at t = {t} (h = {h}); the problem looks stiff")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid grid configuration: {0}")]
    InvalidGrid(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
