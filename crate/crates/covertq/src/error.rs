use covertq_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}: integral diverges, no scalar value")]
    Divergent(&'static str),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    /// 2 invalid config, 3 stability violation, 4 divergent scalar, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Core(CoreError::InvalidParams(_) | CoreError::Domain(_) | CoreError::MalformedTrace(_)) => 2,
            AppError::Core(CoreError::Stability(_) | CoreError::Runaway { .. }) => 3,
            AppError::Divergent(_) => 4,
            _ => 1,
        }
    }
}
