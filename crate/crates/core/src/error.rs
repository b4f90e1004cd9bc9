use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("filter width {delta} is below the grid spacing {spacing}")]
    UnderResolvedFilter { delta: f64, spacing: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solution blew up at t = {time}{}", seed.map(|s| format!(" (seed {s})")).unwrap_or_default())]
    BlowUp { time: f64, seed: Option<u64> },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("reference field has zero norm")]
    DegenerateReference,

    #[error("degenerate state at grid point {index} (x = {x}): {reason}")]
    DegenerateState { index: usize, x: f64, reason: String },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("ensemble member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}\n  reproduce with: {command}")]
    Stage {
        stage: String,
        command: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Parse { what: String, message: String },
}

/// Process exit codes used by the command-line tool.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const MISSING_ARTIFACT: i32 = 4;
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    pub fn for_member(self, index: usize) -> Self {
        Error::Member {
            index,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping member/stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Member { source, .. } | Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Numerical(_) | Error::BlowUp { .. } | Error::DegenerateReference | Error::DegenerateState { .. } => {
                exit_code::NUMERICAL
            }
            Error::MissingArtifact(_) => exit_code::MISSING_ARTIFACT,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => exit_code::MISSING_ARTIFACT,
            _ => exit_code::CONFIG,
        }
    }
}
