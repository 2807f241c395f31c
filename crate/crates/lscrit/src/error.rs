use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lscrit_core::Error),

    #[error("candidate {candidate}: {source}")]
    Candidate {
        candidate: usize,
        #[source]
        source: lscrit_core::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(_) | Error::Candidate { .. } => "computation",
            Error::Config(_) => "config",
            Error::Format(_) | Error::Csv(_) | Error::Json(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
