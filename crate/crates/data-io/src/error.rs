use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: wrong magic 0x{found:08x} at byte 0, expected 0x{expected:08x}")]
    WrongMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated at byte {offset}, needed {needed} more bytes")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },

    #[error("{path}: unexpected dimensions {dims:?} at byte {offset}")]
    BadDimensions {
        path: PathBuf,
        offset: usize,
        dims: Vec<u32>,
    },

    #[error("{path}: label {value} at byte {offset} is not a class id")]
    BadLabel {
        path: PathBuf,
        offset: usize,
        value: u8,
    },

    #[error("{path}: {trailing} trailing bytes after byte {offset}")]
    Trailing {
        path: PathBuf,
        offset: usize,
        trailing: usize,
    },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{0}")]
    Invalid(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}
