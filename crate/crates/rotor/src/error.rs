use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),

    #[error("series tolerance {tol:e} unreachable within {cap} terms (best bound {best:e})")]
    TruncationFailure { tol: f64, cap: usize, best: f64 },

    #[error(
        "kernel positivity lost: value {value:e}, truncation bound {bound:e}; \
         tolerance too loose for this t"
    )]
    PositivityLoss { value: f64, bound: f64 },

    #[error("log-kernel expansion requires t >= {t_min}, got {t}")]
    TimeBelowExpansionRange { t: f64, t_min: f64 },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("configuration geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid chain spec: {0}")]
    InvalidChainSpec(String),

    #[error("transfer-matrix oracle refused: {0}")]
    OracleRefused(String),
}
