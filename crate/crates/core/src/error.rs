use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its domain. `field` names the offending entry.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    /// An input violated a structural precondition (e.g. a non-Hermitian matrix).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    /// The vortex winding changed while iterating the gap equation.
    #[error("topology change: {0}")]
    Topology(String),

    #[error("stage `{stage}` requires `{artifact}`, which was not found; run `{prerequisite}` first")]
    MissingArtifact {
        stage: String,
        artifact: String,
        prerequisite: String,
    },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            // Already attributed, or carries its own stage.
            e @ (Error::Stage { .. } | Error::MissingArtifact { .. }) => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// Process exit code for the command-line front end:
    /// 2 configuration, 3 numerical/convergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Domain(_) | Error::Contract(_) | Error::Numeric(_) | Error::Topology(_) => 3,
            Error::MissingArtifact { .. } | Error::Io { .. } | Error::Format { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
