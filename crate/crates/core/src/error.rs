use std::path::PathBuf;

/// Errors raised anywhere in the estimation stack.
///
/// Variants map one-to-one onto the failure classes the command line reports
/// through its exit codes: numeric failures are distinguished from every
/// other data problem.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error in layer {layer}: {message}")]
    Numeric { layer: usize, message: String },

    #[error("non-finite training loss at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("digital map unavailable: {0}")]
    MapUnavailable(String),

    #[error("no road segment: {0}")]
    NoRoad(String),

    #[error("no road border: {0}")]
    NoBorder(String),

    #[error("particle filter initialization: {0}")]
    Initialization(String),

    #[error("scenario generation: {0}")]
    Generation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the failure is numeric (non-finite activations or losses).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. } | Error::Diverged { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
