use dram_pose::PoseError;
use thiserror::Error;

/// Failure of a benchmark run, grouped by process exit code.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Degenerate {
        context: String,
        #[source]
        source: Box<PoseError>,
    },

    #[error("{context}: {source}")]
    NoConvergence {
        context: String,
        #[source]
        source: Box<PoseError>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    /// 2 for configuration and I/O problems, 3 for degenerate input, 4 when
    /// the minimizer fails to converge.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Io(_) => 2,
            BenchError::Degenerate { .. } => 3,
            BenchError::NoConvergence { .. } => 4,
        }
    }

    /// Classifies a solver error, prefixing `context` to the message.
    pub fn from_pose(context: impl Into<String>, source: PoseError) -> Self {
        let context = context.into();
        match source {
            PoseError::NoConvergence { .. } => BenchError::NoConvergence { context, source: Box::new(source) },
            PoseError::InvalidArgument(_) | PoseError::SizeMismatch { .. } | PoseError::Parse(_) => {
                BenchError::Config(format!("{context}: {source}"))
            }
            PoseError::Io(_) => BenchError::Io(format!("{context}: {source}")),
            _ => BenchError::Degenerate { context, source: Box::new(source) },
        }
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}
