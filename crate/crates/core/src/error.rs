use thiserror::Error;

use crate::diagnostics::LemmaId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{0} is not defined for a population-mode operator")]
    PopulationMode(&'static str),

    #[error("{0}")]
    ModeMismatch(&'static str),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("divergence at iteration {iter}: non-finite {quantity}")]
    Divergence { iter: usize, quantity: &'static str },

    #[error(
        "successor state differs from the recomputed gradient step (relative difference {0:e})"
    )]
    SuccessorMismatch(f64),

    #[error("lemma `{0}` needs the successor state")]
    MissingSuccessor(LemmaId),

    #[error("lemma `{lemma}` needs the constant `{name}`")]
    MissingConstant { lemma: LemmaId, name: &'static str },

    #[error("unknown lemma id `{0}`")]
    UnknownLemma(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    ) -> Self {
        Error::ShapeMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
