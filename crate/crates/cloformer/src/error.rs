use thiserror::Error;

/// Library-wide error type. The variant picks the CLI error category
/// (`ERROR <category>: <detail>`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The message without the category prefix, for `ERROR <category>: <detail>`.
    pub fn detail(&self) -> String {
        match self {
            Error::Dimension(s)
            | Error::Argument(s)
            | Error::Numeric(s)
            | Error::Config(s)
            | Error::Format(s) => s.clone(),
            Error::Io(e) => e.to_string(),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Argument(_) => "argument",
            Error::Numeric(_) => "numeric",
            Error::Config(_) => "configuration",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(format!($($arg)*)) };
}
macro_rules! arg_err {
    ($($arg:tt)*) => { $crate::error::Error::Argument(format!($($arg)*)) };
}
macro_rules! cfg_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}

pub(crate) use {arg_err, cfg_err, dim_err};
