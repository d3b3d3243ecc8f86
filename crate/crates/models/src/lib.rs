//! A small convolutional image classifier, a convolutional VAE with an
//! 8-dimensional Gaussian latent, and two training objectives for the VAE:
//! pixel reconstruction, and agreement of a frozen classifier's answers on
//! the data and on the reconstruction. Both objectives add `β` times the
//! KL rate term.

mod classifier;
mod error;
mod eval;
mod loss;
mod net;
mod train;
mod vae;

pub use classifier::{Classifier, CLASSES, DROPOUT, INPUT_SIDE};
pub use error::{ModelError, Result};
pub use eval::{
    accuracy, classifier_accuracy, evaluate_downstream, evaluate_rate, evaluate_vae, rate_bits_per_image,
    VaeEvaluation,
};
pub use loss::{
    action_centric_terms, vae_loss_action_centric, vae_loss_vanilla, vanilla_terms, Divergence, LossTerms,
    Objective,
};
pub use net::Net;
pub use train::{
    classifier_test_accuracy, classifier_train, steps_to_threshold, vae_train, ClassifierRun, StepMetric,
    TrainConfig, VaeRun,
};
pub use vae::{Reconstruction, Vae, VaePass, VaeSpec};
