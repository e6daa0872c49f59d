use std::io;

use thiserror::Error;

/// Errors surfaced by every fallible operation in this crate.
#[derive(Debug, Error)]
pub enum MelcError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, MelcError>;

impl MelcError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        MelcError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn data(message: impl Into<String>) -> Self {
        MelcError::Data(message.into())
    }

    pub(crate) fn model(message: impl Into<String>) -> Self {
        MelcError::Model(message.into())
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        MelcError::Config(message.into())
    }
}
