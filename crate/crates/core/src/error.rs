use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("at least one user is required")]
    EmptyUsers,

    #[error("reference channel {0} has zero norm")]
    ZeroNormChannel(usize),

    #[error("transmit power must be positive for LS estimation")]
    ZeroPower,

    #[error("combiner column {0} is zero")]
    ZeroCombiner(usize),

    #[error("basis is rank deficient (Gram condition number {condition:e})")]
    SingularBasis { condition: f64 },

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("M = {m} yields no valid distance (radicand {radicand:e})")]
    InvalidM { m: i64, radicand: f64 },

    #[error("no valid M candidate in the search window")]
    NoValidCandidate,

    #[error("spectrum is constant; no peak can be selected")]
    DegenerateSpectrum,

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularBasis { .. }
            | Error::NonFinite(_)
            | Error::InvalidM { .. }
            | Error::NoValidCandidate
            | Error::DegenerateSpectrum
            | Error::DegenerateSamples(_)
            | Error::ZeroNormChannel(_)
            | Error::ZeroCombiner(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
