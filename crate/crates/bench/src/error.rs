use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] rat_core::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("rate fit: {0}")]
    Fit(String),
}

impl BenchError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        BenchError::Io { path: path.display().to_string(), source }
    }

    /// Process exit code: 1 config, 2 numerical, 3 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            BenchError::Core(rat_core::Error::InvalidInput(_)) => 1,
            BenchError::Core(_) | BenchError::Fit(_) => 2,
            BenchError::Io { .. } | BenchError::Csv(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
