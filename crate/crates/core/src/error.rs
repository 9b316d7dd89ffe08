use std::path::PathBuf;

/// Error type shared across the toolkit.
///
/// The variants map onto the failure classes the modules report: broken
/// on-disk layouts (`Format`), unparseable text inputs (`Parse`), inputs
/// that are well-formed but semantically invalid (`Data`), bad
/// hyperparameters (`Config`), and plain I/O failures with path context.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Prefix the message with a pipeline stage name, preserving the variant.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Format(m) => Error::Format(format!("{stage}: {m}")),
            Error::Data(m) => Error::Data(format!("{stage}: {m}")),
            Error::Config(m) => Error::Config(format!("{stage}: {m}")),
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{stage}: {message}"),
            },
            io @ Error::Io { .. } => io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
