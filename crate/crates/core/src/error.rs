use thiserror::Error;

/// Errors raised by the association, power-control and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("BS {bs} serves users but transmits at zero power")]
    ZeroPowerLoadedBs { bs: usize },

    #[error("instance too large for exhaustive search: {0}")]
    OracleGuard(String),

    #[error("instance has no MIMO channels")]
    MissingChannels,

    #[error("utility cross-check failed: solver {reported} vs recomputed {recomputed}")]
    CrossCheck { reported: f64, recomputed: f64 },

    #[error("unsupported instance format version {0}")]
    FormatVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
