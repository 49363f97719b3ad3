use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed instance, class, or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An exact-enumeration routine would exceed its node budget.
    #[error("enumeration budget exceeded: needs about {needed} nodes, limit {limit}")]
    Budget { needed: u64, limit: u64 },

    /// The emission matrix has no left inverse.
    #[error("emission matrix is rank deficient (singular values {0:?})")]
    RankDeficient(Vec<f64>),

    /// Two models that must share spaces do not.
    #[error("model space mismatch: {0}")]
    SpaceMismatch(String),

    /// Emission-assignment sampling gave up before certification.
    #[error(
        "no emission assignment reached alpha_eff >= {threshold:.3e} in {attempts} attempts; \
         try a larger per-group alphabet"
    )]
    AssignmentRetriesExceeded { threshold: f64, attempts: usize },

    /// The linear-programming backend failed to solve a well-posed program.
    #[error("linear program failed: {0}")]
    Lp(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
