use std::path::PathBuf;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure in {context} after {iterations} iterations")]
    NonConvergence { context: &'static str, iterations: usize },

    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{}:{line}: {message}", file.display())]
    Ingestion {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("training diverged at iteration {iteration} (last good iteration {last_good_iteration:?})")]
    TrainingDiverged {
        iteration: usize,
        last_good_iteration: Option<usize>,
    },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonFiniteGradient { .. }
                | Error::TrainingDiverged { .. }
                | Error::UndefinedCorrelation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
