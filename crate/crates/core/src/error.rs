use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameters, layer chains, grids or enum values.
    #[error("configuration error: {0}")]
    Config(String),

    /// A vector, window or batch does not match what the receiver expects.
    #[error("input error: {0}")]
    Input(String),

    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    /// Threshold or parameter selection cannot proceed with the data at hand.
    #[error("model selection error: {0}")]
    Selection(String),

    #[error("undefined metric: no {0} samples in the evaluation set")]
    UndefinedMetric(&'static str),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn selection(msg: impl Into<String>) -> Self {
        Error::Selection(msg.into())
    }
}
