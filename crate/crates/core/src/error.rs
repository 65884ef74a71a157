use std::path::PathBuf;

use thiserror::Error;

use crate::study::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{op}: iteration did not converge")]
    Convergence { op: &'static str },

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("{op}: length mismatch ({left} vs {right})")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{op}: degenerate input: {detail}")]
    Degenerate { op: &'static str, detail: String },

    #[error("integer overflow computing {0}")]
    Overflow(String),

    #[error("invalid dataset:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A simulation could not finish within its generation budget.
    #[error("{0}")]
    Exhausted(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    /// True for failures of the numeric kernels rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Overflow(_) | Error::Exhausted(_))
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}
