use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] tensor_autodiff::AutodiffError),

    #[error(transparent)]
    Data(#[from] data_io::DataError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),

    #[error("training diverged at step {step}: {message}")]
    Diverged { step: u64, message: String },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
