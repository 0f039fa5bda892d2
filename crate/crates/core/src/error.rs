use thiserror::Error;

/// Errors surfaced by configuration validation, the solvers and the sweep
/// harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field is out of its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Operands with incompatible dimensions were combined.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The follower iteration produced a non-finite objective; carries a
    /// diagnostic snapshot of the iteration state.
    #[error("follower solve diverged at iteration {iteration}: objective {objective}; {summary}")]
    NonFinite {
        iteration: usize,
        objective: f64,
        summary: String,
    },

    /// Pricing was requested while every shrinkage-input norm is zero, so no
    /// price can generate revenue.
    #[error("no reflection demand: all shrinkage-input norms are zero")]
    NoReflectionDemand,

    /// More than the tolerated fraction of Monte-Carlo trials failed.
    #[error("sweep aborted: {failed} of {trials} trials failed for {context}")]
    TooManyFailures {
        failed: usize,
        trials: usize,
        context: String,
    },

    /// Writing an output artifact failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
