use alloc::string::String;

/// Errors raised by model evaluation, sampling and criterion computation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("chain {chain}: every proposal was rejected during warmup window {window}")]
    DegenerateChain { chain: usize, window: usize },

    #[error("chain {chain}: no finite initial log-posterior after {attempts} prior draws")]
    Initialization { chain: usize, attempts: usize },

    #[error("non-finite log-density {value} at datum {index}")]
    NonFiniteDensity { index: usize, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
