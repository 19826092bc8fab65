//! Error types shared across the workbench.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A dataset file is missing or malformed.
    #[error("parse error in {file}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        file: String,
        line: Option<usize>,
        message: String,
    },

    /// Operand shapes are incompatible for an operation.
    #[error("shape mismatch in {op}: lhs {lhs:?} vs rhs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    /// A configuration value is out of its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A computation hit a numerically invalid state (zero norms, non-finite values).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An explanation collapsed to an all-zero heat-map; the caller should fall
    /// back to random augmentation for this instance.
    #[error("degenerate explanation: smoothed channel weights are all zero")]
    DegenerateExplanation,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(file: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Shape { op, lhs, rhs }
    }

    /// Machine-readable kind tag, used by the CLI's error.json.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::Numerical(_) => "numerical",
            Error::DegenerateExplanation => "degenerate_explanation",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
