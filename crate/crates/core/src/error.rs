use thiserror::Error;

use crate::solver::NewtonReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid field: {0}")]
    Field(String),

    /// Problem data violates one of the structural assumptions
    /// (ellipticity, coupling coercivity or monotonicity).
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("nonconvergence{}: {reason}", stage.map(|s| format!(" at stage {s}")).unwrap_or_default())]
    NonConvergence {
        stage: Option<usize>,
        reason: String,
        report: Box<NewtonReport>,
    },

    #[error("bracket failure after {expansions} expansions: {reason}")]
    BracketFailure { expansions: usize, reason: String },

    #[error("bisection stalled after {iterations} iterations (|mass - 1| = {gap:e})")]
    BisectionStalled { iterations: usize, gap: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("invalid config value for `{key}`: {msg}")]
    ConfigValue { key: String, msg: String },

    #[error("malformed fields file: {0}")]
    FieldsFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised while checking inputs, before any solve ran.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Grid(_)
                | Error::Field(_)
                | Error::Validation(_)
                | Error::UnknownProblem(_)
                | Error::ConfigParse { .. }
                | Error::ConfigValue { .. }
        )
    }

    /// True for failures of the iterative machinery (Newton, bracketing, bisection).
    pub fn is_nonconvergence(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::BracketFailure { .. }
                | Error::BisectionStalled { .. }
                | Error::LinearSolve(_)
        )
    }
}
