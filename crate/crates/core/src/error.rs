use std::io;

use crate::constraints::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid or inconsistent configuration, caught before any compute.
    #[error("configuration error: {0}")]
    Config(String),

    /// Shapes that do not line up with the architecture.
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    /// A density, gradient or sampler state became non-finite.
    #[error("numerical failure{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        iteration: Option<usize>,
        message: String,
    },

    /// A metric has no points to be computed over.
    #[error("metric not applicable: {0}")]
    NotApplicable(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numerical(iteration: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Numerical {
            iteration,
            message: msg.into(),
        }
    }

    /// True for errors caused by user input rather than numerics or I/O.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Shape(_) | Error::Parse(_) | Error::Data(_) | Error::Csv(_)
        )
    }
}
