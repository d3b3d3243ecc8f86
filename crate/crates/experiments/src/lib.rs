//! Orchestration behind the `acrd` command: the rate-distortion demo,
//! classifier and VAE training, sweep aggregation, reconstruction dumps,
//! latent PCA and the information-identity battery.
//!
//! Every command writes CSV files whose `# key=value` header records the
//! full configuration, seed and crate version.

pub mod config;
pub mod curve;
pub mod error;
pub mod pca;
pub mod rd_demo;
pub mod recon;
pub mod training;

pub use config::{Scale, Settings};
pub use error::{CliError, Result};
