use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent case description.
    #[error("{path}:{line}: {msg}")]
    Config { path: String, line: usize, msg: String },
    /// A case that parses but cannot be set up (grid sizing, body placement).
    #[error("case setup failed: {0}")]
    Setup(ibpm_core::Error),
    /// Malformed checkpoint or matrix file.
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] ibpm_core::Error),
    /// Runtime failure during stepping; the last good state was written to
    /// `checkpoint`.
    #[error("step {step} failed: {source} (last good state saved to {checkpoint})")]
    Step {
        step: usize,
        checkpoint: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config { .. } | Error::Setup(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
