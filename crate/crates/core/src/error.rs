use thiserror::Error;

/// Errors produced anywhere in the core library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: produced non-finite values")]
    NonFinite { op: &'static str },

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("wav: {0}")]
    Wav(String),

    #[error("rttm line {line}: {detail}")]
    RttmParse { line: usize, detail: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training: {0}")]
    Training(String),

    #[error("[{module}] {source}")]
    Tagged {
        module: &'static str,
        #[source]
        source: Box<CoreError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    /// Wrap the error with the name of the subsystem it escaped from.
    pub fn tag(self, module: &'static str) -> CoreError {
        CoreError::Tagged {
            module,
            source: Box::new(self),
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> CoreError {
        CoreError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
