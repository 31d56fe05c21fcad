use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("log for user `{0}` contains no events")]
    EmptyLog(String),

    #[error("cannot build a vocabulary from zero events")]
    EmptyVocabulary,

    #[error("unknown app `{0}`")]
    UnknownApp(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("bin {bin} holds several apps but all their encoding frequencies are zero")]
    DegenerateBin { bin: usize },

    #[error("shape error at layer `{layer}`: {msg}")]
    Shape { layer: String, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the environment rather than of the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }

    pub(crate) fn shape(layer: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Shape { layer: layer.into(), msg: msg.into() }
    }
}
