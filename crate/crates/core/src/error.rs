//! Error type shared by the whole toolkit.
//!
//! Every error carries a [`ErrorClass`] so callers (notably the CLI) can map
//! failures to distinct exit codes without pattern-matching each variant.

use thiserror::Error;

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Input data violated a schema, parse rule, or row invariant.
    Validation,
    /// Tensor dimensions did not agree.
    Shape,
    /// A computation produced or encountered a non-finite value.
    Numeric,
    /// An argument was outside its admissible domain.
    Domain,
    /// Filesystem or serialization trouble.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("non-finite value: {context}")]
    Numeric { context: String },

    #[error("domain error: {message}")]
    Domain { message: String },

    #[error("validation error: {message}")]
    Validation { message: String },

    #[error("schema error: missing column '{column}' in {schema} header")]
    Schema { column: String, schema: &'static str },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Shape { .. } => ErrorClass::Shape,
            Error::Numeric { .. } => ErrorClass::Numeric,
            Error::Domain { .. } => ErrorClass::Domain,
            Error::Validation { .. } | Error::Schema { .. } | Error::Parse { .. } => {
                ErrorClass::Validation
            }
            Error::Io(_) | Error::Serde(_) | Error::Csv(_) => ErrorClass::Io,
            Error::Fold { source, .. } => source.class(),
        }
    }

    /// Attach a fold index to an error bubbling out of per-fold work.
    pub fn in_fold(self, fold: usize) -> Self {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain {
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation {
            message: message.into(),
        }
    }

    pub fn numeric(context: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
