use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config { line: None, msg: msg.into() }
    }

    pub(crate) fn config_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Config { line: Some(line), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
