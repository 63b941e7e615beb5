use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, presets or hyperparameters that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite value showed up where a finite one is required.
    #[error("numeric error in {context}: {value}")]
    Numeric { context: String, value: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn numeric(context: impl Into<String>, value: f64) -> Self {
        Error::Numeric {
            context: context.into(),
            value,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) => 2,
            Error::Numeric { .. } | Error::Internal(_) => 3,
            Error::Config(_) | Error::Usage(_) | Error::Json(_) => 64,
        }
    }
}

pub(crate) fn ensure_finite(context: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric(context, value))
    }
}
