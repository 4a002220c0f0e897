use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bus susceptance matrix is singular (network disconnected?)")]
    SingularTopology,
    #[error("outage of line {0} islands the network")]
    RadialLine(usize),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("fleet has zero total capacity")]
    DegenerateFleet,
    #[error("LP is infeasible")]
    Infeasible,
    #[error("LP is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("enumeration budget exceeded: {patterns} patterns > {budget}")]
    BudgetExceeded { patterns: u128, budget: u128 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("total load {load} outside generation range [{lo}, {hi}]")]
    InfeasibleLoad { load: f64, lo: f64, hi: f64 },
    #[error("training diverged: {0}")]
    DivergenceDetected(String),
    #[error("non-finite constraint violation")]
    NonFiniteViolation,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Numerical failures (solver breakdowns, divergence) vs. bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularTopology
                | Error::NumericalFailure(_)
                | Error::DivergenceDetected(_)
                | Error::NonFiniteViolation
                | Error::Unbounded
        )
    }
}
