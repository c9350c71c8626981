use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArg { arg: &'static str, reason: String },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("no periodicity found in {id}: {detail}")]
    NoPeriodicity { id: String, detail: String },

    #[error("unsupported audio in {id}: {reason}")]
    Audio { id: String, reason: String },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("non-finite loss at step {step} (lr {lr:e}, batch {batch})")]
    NonFiniteLoss { step: u64, lr: f64, batch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArg {
            arg,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed inputs rather than by the caller.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::NoPeriodicity { .. }
                | Error::Audio { .. }
                | Error::Format { .. }
                | Error::Io { .. }
                | Error::Json(_)
        )
    }
}
