//! Error type shared across the harness.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor construction or an op was handed inconsistent shapes.
    #[error("shape error in {context}: {detail}")]
    Shape { context: &'static str, detail: String },

    /// An op registry lookup failed.
    #[error("no op named '{0}' is registered for gradient checking")]
    UnknownOp(String),

    /// A config value is out of its documented range.
    #[error("config error: {0}")]
    Config(String),

    /// Target box has zero area, empty candidate set, zero-extent metric
    /// input — anything where the math below would divide by nothing.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Tracker state used with the wrong tracker or before initialization.
    #[error("tracker state error: {0}")]
    State(String),

    /// Attack/tracker pairing ruled out by the applicability matrix
    /// (README, Table 1).
    #[error("attack '{attack}' is not applicable to tracker '{tracker}': {reason} (see applicability matrix, Table 1 of the README)")]
    Applicability {
        attack: String,
        tracker: String,
        reason: String,
    },

    /// Drop percentage against a zero baseline is undefined.
    #[error("drop percentage undefined: original metric is zero")]
    UndefinedDrop,

    /// A sequence exceeded its wall-clock budget and was abandoned.
    #[error("sequence run exceeded its {budget_s:.0}s budget after {frames} tracked frames")]
    Timeout { budget_s: f64, frames: usize },

    /// Malformed dataset file; reports where parsing stopped.
    #[error("parse error in {path} (line {line}): {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            context,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
