use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { offset: usize },

    #[error("corpus has {found} records, at least {required} are needed to populate every split")]
    CorpusTooSmall { found: usize, required: usize },

    #[error("all records belong to one class; class balance is undefined")]
    SingleClass,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("paired inputs have different key sets ({count} mismatches; first: {})", .examples.join(", "))]
    KeyMismatch { count: usize, examples: Vec<String> },

    #[error("no perturbation pairs with similarity >= {min_similarity}")]
    NoPairs { min_similarity: f64 },

    #[error("{model}/{dataset}: {reason}")]
    Group {
        model: String,
        dataset: String,
        reason: String,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
