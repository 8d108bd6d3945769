use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("ill-conditioned system (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("no DoA branch falls inside the prior, candidates (rad): {candidates:?}")]
    DoaOutsidePrior { candidates: Vec<f64> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad inputs rather than by the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_config(),
            other => matches!(other, Error::Config(_) | Error::Shape(_) | Error::Io { .. } | Error::Format(_)),
        }
    }

    /// Process exit status: 2 for bad inputs, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            3
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
