use thiserror::Error;

/// Everything that can go wrong inside the laboratory.
///
/// Variants are grouped by the CLI exit code they map to: input problems
/// (`InvalidInput`, `Parse`, `Unsupported`, `Precondition`) are usage errors,
/// the rest are numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate saddle O_{k}: eigenvalue for direction {j} is zero")]
    DegenerateSaddle { k: usize, j: usize },

    #[error("integration diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("integrator failure at t = {t}: {reason}")]
    IntegratorFailure { t: f64, reason: String },

    #[error("passage failure near O_{k}: {reason}")]
    PassageFailure { k: usize, reason: String },

    #[error("trace failure for fan {k} at angle {phi}: {reason}")]
    TraceFailure { k: usize, phi: f64, reason: String },

    #[error("mesh consistency error: {0}")]
    MeshConsistency(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("channel violation: transition O_{from} -> O_{to} is neither +1 nor +2 mod {p}")]
    ChannelViolation { from: usize, to: usize, p: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::Unsupported(_)
                | Error::Precondition(_)
                | Error::Io(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
