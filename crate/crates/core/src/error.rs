use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config schema error at key `{key}`: {message}")]
    Schema { key: String, message: String },

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error("nodes are co-located (zero distance), path loss undefined")]
    ZeroDistance,

    #[error("receive beamformer must be unit norm, got norm {0}")]
    NonUnitBeamformer(f64),

    #[error("invalid expansion point: {0}")]
    Expansion(String),

    #[error("empty slot list")]
    EmptySlots,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("subproblem is not convex: {0}")]
    NotConvex(String),

    #[error("{block} block infeasible at slot {slot}: {reason}")]
    Infeasible {
        block: &'static str,
        slot: usize,
        reason: String,
    },

    #[error("unknown scheme `{0}` (expected mrt-fixed-traj, opt-bf-fixed-traj or proposed)")]
    UnknownScheme(String),

    #[error("invalid sweep spec: {0}")]
    Sweep(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error means the sensing requirement cannot be met.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. })
    }
}
