use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is outside its domain.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two series that must share a grid or channel count do not.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    /// Simulated data violates a model assumption (non-positive total
    /// intensity, inadmissible representative strategy, ...).
    #[error("model assumption violated: {0}")]
    Assumption(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("too few paths for a statistical verdict: got {got}, need at least {need}")]
    StatisticalPower { got: usize, need: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit status used by the `mfm` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Shape(_)
            | Error::InvalidStrategy(_)
            | Error::UnsupportedModel(_)
            | Error::StatisticalPower { .. } => 2,
            Error::Assumption(_) => 3,
            Error::Invariant(_) | Error::Io(_) | Error::Json(_) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::config("x").exit_code(), 2);
        assert_eq!(Error::StatisticalPower { got: 1, need: 100 }.exit_code(), 2);
        assert_eq!(Error::Assumption("x".into()).exit_code(), 3);
        assert_eq!(Error::Invariant("x".into()).exit_code(), 1);
    }
}
