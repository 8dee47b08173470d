use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("column {index} of the genotype matrix is constant")]
    DegenerateColumn { index: usize },
    #[error("projected kernel has no nonzero eigenvalue")]
    DegenerateKernel,
    #[error("config error: {0}")]
    Config(String),
    #[error("replication {index}: {source}")]
    Replication { index: u64, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric(_) | Error::DegenerateKernel | Error::DegenerateColumn { .. } => true,
            Error::Replication { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
