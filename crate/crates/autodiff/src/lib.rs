//! Reverse-mode automatic differentiation over dense `f64` tensors, with the
//! convolutional, normalization and loss operations needed for small image
//! classifiers and VAEs, plus Adam and a binary checkpoint format.

mod adam;
mod checkpoint;
mod error;
mod gemm;
mod gradcheck;
pub mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, MAGIC};
pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, DEFAULT_EPS};
pub use tape::{Gradients, Mode, RunningStats, Tape, Var, BN_EPS, BN_MOMENTUM};
pub use tensor::Tensor;
