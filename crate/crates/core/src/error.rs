use thiserror::Error;

/// Errors raised by model construction, forward simulation, weighting and IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampling capacity exhausted after {attempts} attempts: could not satisfy {constraint}")]
    Capacity { constraint: String, attempts: usize },

    #[error("dipole kernel singularity: source at distance {distance:e} from electrode {electrode}")]
    Singularity { electrode: usize, distance: f64 },

    #[error("truncation rank {requested} exceeds numerical rank {effective}")]
    Rank { requested: usize, effective: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
