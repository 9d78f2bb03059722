use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid value for `{key}`: {msg}")]
    ConfigKey { key: String, msg: String },

    #[error("design error: {0}")]
    Design(String),

    #[error("processing error: {0}")]
    Processing(String),

    #[error("metering error: {0}")]
    Metering(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("wav error in {path}: {msg}")]
    Wav { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn key(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::ConfigKey {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
