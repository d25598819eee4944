use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the solver and its diagnostics.
///
/// The variants map onto the process exit codes of the command-line tool
/// (see [`Error::exit_code`]) so sweeps can triage failures mechanically.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("grid resolution M={m} aliases the basis: need M >= {required}")]
    Aliasing { m: usize, required: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver diverged at t={t}: {message}")]
    Divergence { t: f64, message: String },

    #[error("Picard iteration did not converge in {iterations} iterations (last difference {last_diff:e})")]
    PicardNonConvergence {
        iterations: usize,
        last_diff: f64,
        contraction: Vec<f64>,
    },

    #[error("vacuum-degenerate mass matrix at t={t}: min eigenvalue {min_eigenvalue:e} <= threshold {threshold:e}")]
    VacuumDegenerate {
        t: f64,
        min_eigenvalue: f64,
        threshold: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// Stamps the failure time onto time-aware variants.
    pub(crate) fn at_time(self, time: f64) -> Self {
        match self {
            Error::Divergence { message, .. } => Error::Divergence { t: time, message },
            Error::VacuumDegenerate {
                min_eigenvalue,
                threshold,
                ..
            } => Error::VacuumDegenerate {
                t: time,
                min_eigenvalue,
                threshold,
            },
            other => other,
        }
    }

    /// Process exit code: 2 user error, 3 blow-up, 4 fixed-point failure,
    /// 5 vacuum degeneracy, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Aliasing { .. } | Error::InvalidInput(_) => 2,
            Error::Divergence { .. } => 3,
            Error::PicardNonConvergence { .. } => 4,
            Error::VacuumDegenerate { .. } => 5,
            Error::Io(_) | Error::Serialization(_) => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
