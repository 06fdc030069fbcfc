use thiserror::Error;

pub type Result<T> = std::result::Result<T, HeatError>;

#[derive(Debug, Error)]
pub enum HeatError {
    /// More masks requested than there are non-empty subsets of the slots.
    #[error("family too large for kmax={kmax}: requested {requested} masks, only {available} non-empty subsets exist")]
    FamilyTooLarge {
        kmax: usize,
        requested: usize,
        available: u128,
    },

    #[error("invalid joint mask: {0}")]
    InvalidMask(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Index or dimension outside what the receiving object declares.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("incompatible components: {0}")]
    IncompatibleComponents(String),

    /// An observation with zero probability under the current belief and action.
    #[error("inconsistent observation {observation} after action {action}: likelihood is zero")]
    InconsistentObservation { action: usize, observation: usize },

    #[error("malformed model: {0}")]
    Malformed(String),

    #[error("instance too large for exact search: {count} joint policies exceeds cap {cap}")]
    TooLargeForExactSearch { count: u128, cap: u128 },

    /// Trajectory collected under an older parameter version offered to an update.
    #[error("stale trajectory: collected at theta_version {collected}, policy is at {current}")]
    StaleTrajectory { collected: u64, current: u64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
