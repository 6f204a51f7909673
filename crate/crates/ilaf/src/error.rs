//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by tensor ops, models, attacks, solvers, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },

    #[error("backward on a detached tensor (no gradient path to any leaf)")]
    DetachedBackward,

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("backward-mode flag applies only to relu nodes")]
    NotRelu,

    #[error("unknown architecture id `{0}`")]
    UnknownArch(String),

    #[error("split depth {k} out of range (1..{layers})")]
    SplitOutOfRange { k: usize, layers: usize },

    #[error("training diverged at epoch {epoch}: loss became non-finite")]
    Divergence { epoch: usize },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("trajectories mix different anchor inputs")]
    MixedAnchors,

    #[error("trajectories mix feature dimensions ({a} vs {b})")]
    MixedFeatureDim { a: usize, b: usize },

    #[error("solver did not converge within {sweeps} sweeps (gap estimate {gap:.3e})")]
    NonConvergence { sweeps: usize, gap: f64 },

    #[error("guide anchor does not match g(x) for the refined input")]
    AnchorMismatch,

    #[error("degenerate guide direction (h_p equals the benign feature anchor)")]
    DegenerateDirection,

    #[error("{0}")]
    InvalidConfig(String),

    #[error("degenerate variance: correlation undefined on constant series")]
    DegenerateVariance,

    #[error("need at least {need} points for a correlation, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} file: {detail}")]
    Format { what: &'static str, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
