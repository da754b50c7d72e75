use std::path::PathBuf;

use fitmap_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: syntax error at line {line}, column {column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: unknown version {found} (expected {expected})")]
    UnknownVersion {
        path: String,
        found: u64,
        expected: u64,
    },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("mapping check failed: {0}")]
    Mapping(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
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

    /// Process exit status: 2 configuration, 3 validation, 4 capacity,
    /// 5 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Csv(_) => 2,
            Error::Syntax { .. }
            | Error::UnknownVersion { .. }
            | Error::Format { .. }
            | Error::Mapping(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Core(e) => match e {
                CoreError::InvalidArgument(_) => 2,
                CoreError::UnitTooWide { .. }
                | CoreError::BudgetExceeded { .. }
                | CoreError::InstanceTooLarge { .. } => 4,
                CoreError::NotConverged { .. } => 5,
                _ => 3,
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
