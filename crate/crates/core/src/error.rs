use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI header field `{field}`: {message}")]
    Format { field: &'static str, message: String },

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedType(i16),

    #[error("expected a 3-D volume, found {0} non-singleton dimensions")]
    Dimensionality(usize),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty structure for label {label}: {side} mask is empty")]
    EmptyStructure { label: u32, side: &'static str },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(field: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            field,
            message: message.into(),
        }
    }
}
