use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (dimensions, non-finite entries, bad labels).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A mathematical precondition does not hold for the given instance.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configured enumeration or size cap was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// Randomized synthesis ran out of attempts.
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    /// A numerical kernel failed to converge or produced an unusable result.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Innermost error once stage labels are peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
