//! Error type shared across the pipeline.
//!
//! Every variant maps to a stable machine-readable code (see [`Error::code`])
//! so the CLI can emit a single parseable error line and FFI callers can
//! branch on failures without string matching.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("config error: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("required input is missing: {0}")]
    MissingInput(PathBuf),

    #[error("prompt budget {budget} is smaller than the function source ({required} tokens)")]
    BudgetTooSmall { budget: usize, required: usize },

    #[error("text produced no tokens")]
    EmptyTokenStream,

    #[error("sample values are too concentrated to fit a two-component mixture")]
    DegenerateDistribution,

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("batch contains no positive pairs")]
    NoPositives,

    #[error("evaluation dataset has no candidates")]
    EmptyCandidates,

    #[error("evaluation dataset has no queries")]
    NoQueries,

    #[error("reports cover different query sets")]
    MismatchedQuerySets,

    #[error("annotation sets have mismatched shapes")]
    MismatchedAnnotations,

    #[error("no groups eligible for this operation")]
    NoGroups,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("work directory is locked by another run: {0}")]
    Locked(PathBuf),

    #[error("backend request failed: {0}")]
    Backend(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    /// Stable machine-readable code for this error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MissingInput(_) => "missing_input",
            Error::BudgetTooSmall { .. } => "budget_too_small",
            Error::EmptyTokenStream => "empty_token_stream",
            Error::DegenerateDistribution => "degenerate_distribution",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::NoPositives => "no_positives",
            Error::EmptyCandidates => "empty_candidates",
            Error::NoQueries => "no_queries",
            Error::MismatchedQuerySets => "mismatched_query_sets",
            Error::MismatchedAnnotations => "mismatched_annotations",
            Error::NoGroups => "no_groups",
            Error::NonFinite(_) => "nonfinite",
            Error::Locked(_) => "locked",
            Error::Backend(_) => "backend",
            Error::Checkpoint(_) => "checkpoint",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        assert_eq!(Error::BudgetTooSmall { budget: 1, required: 2 }.code(), "budget_too_small");
        assert_eq!(Error::DegenerateDistribution.code(), "degenerate_distribution");
        assert_eq!(Error::MissingInput("x".into()).code(), "missing_input");
        assert_eq!(Error::EmptyTokenStream.code(), "empty_token_stream");
    }
}
