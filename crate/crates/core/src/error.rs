use thiserror::Error;

pub type Result<T> = std::result::Result<T, NasError>;

#[derive(Debug, Error)]
pub enum NasError {
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("spec already has {max_layers} layers, cannot extend")]
    Capacity { max_layers: usize },

    #[error("architecture not in benchmark: {0}")]
    NotInBenchmark(String),

    #[error("search space has {size} candidates, enumeration limit is {limit}")]
    SpaceTooLarge { size: u128, limit: u128 },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl NasError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        NasError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by user input rather than runtime failure.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            NasError::Validation(_)
                | NasError::Config(_)
                | NasError::SpaceTooLarge { .. }
                | NasError::Json(_)
        )
    }
}
