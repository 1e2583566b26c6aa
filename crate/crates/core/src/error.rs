use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {what} at step {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("volatility vanishes at step {index}")]
    ZeroVolatility { index: usize },

    #[error("grid mismatch: expected {expected} steps, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("time {0} is not a point of the grid")]
    OffGrid(f64),

    #[error("arbitrage in period {period}: returns must straddle zero")]
    Arbitrage { period: usize },

    #[error("empty measure family for period {period}")]
    EmptyFamily { period: usize },

    #[error("penalty is infinite for the requested measure change")]
    InfinitePenalty,

    #[error("minimisation is unbounded below: {0}")]
    Unbounded(String),

    #[error("grid too coarse: {0}")]
    CoarseGrid(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
