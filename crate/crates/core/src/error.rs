use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A file-backed probability map was not found for a window key.
    #[error("no stored probability map for key `{key}` (looked for {path})")]
    MissingMap { key: String, path: PathBuf },

    /// Malformed binary or text input.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// A probability map whose per-pixel sums are too far from one to renormalize.
    #[error("invalid probability map at pixel ({x}, {y}): channel sum {sum}")]
    NotNormalized { x: usize, y: usize, sum: f64 },

    /// Fine-backend failure while refining a specific subwindow.
    #[error("refinement window {window} failed: {source}")]
    Window {
        window: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than misuse of the API.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Contract(_) => false,
            Error::Window { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
