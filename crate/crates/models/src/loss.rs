use std::fmt;
use std::str::FromStr;

use tensor_autodiff::{Tape, Tensor, Var};

use crate::classifier::Classifier;
use crate::error::{ModelError, Result};

/// How reconstructions are compared through the frozen classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Divergence {
    /// `KL[softmax(cls(x)) ‖ softmax(cls(recon))]` per image.
    #[default]
    ClassifierKl,
    /// Cross-entropy of `cls(recon)` against the true label.
    LabelCrossEntropy,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Divergence::ClassifierKl => "classifier_kl",
            Divergence::LabelCrossEntropy => "label_cross_entropy",
        })
    }
}

impl FromStr for Divergence {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classifier_kl" => Ok(Divergence::ClassifierKl),
            "label_cross_entropy" => Ok(Divergence::LabelCrossEntropy),
            _ => Err(ModelError::Config(format!("unknown divergence {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Vanilla { beta: f64 },
    ActionCentric { beta: f64, divergence: Divergence },
}

impl Objective {
    pub fn new(mode: &str, beta: f64, divergence: Divergence) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(ModelError::Config(format!("beta {beta} must be a non-negative real")));
        }
        match mode {
            "vanilla" => Ok(Objective::Vanilla { beta }),
            "action_centric" => Ok(Objective::ActionCentric { beta, divergence }),
            _ => Err(ModelError::Config(format!("unknown mode {mode:?}"))),
        }
    }

    pub fn beta(&self) -> f64 {
        match *self {
            Objective::Vanilla { beta } | Objective::ActionCentric { beta, .. } => beta,
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            Objective::Vanilla { .. } => "vanilla",
            Objective::ActionCentric { .. } => "action_centric",
        }
    }
}

/// Batch-mean loss plus its per-image pieces.
pub struct LossTerms {
    pub loss: Var,
    pub distortion: Var,
    pub kl: Var,
}

fn combine(tape: &mut Tape, distortion: Var, kl: Var, beta: f64) -> Result<LossTerms> {
    let weighted = tape.scale(kl, beta)?;
    let total = tape.add(distortion, weighted)?;
    let loss = tape.mean(total)?;
    Ok(LossTerms { loss, distortion, kl })
}

/// Summed per-image Bernoulli NLL of `x` under `sigmoid(logits)` plus `β·KL`,
/// averaged over the batch.
pub fn vanilla_terms(tape: &mut Tape, x: &Tensor, logits: Var, mu: Var, logvar: Var, beta: f64) -> Result<LossTerms> {
    let distortion = tape.bce_with_logits(logits, x)?;
    let kl = tape.kl_diag_gaussian_vs_standard(mu, logvar)?;
    combine(tape, distortion, kl, beta)
}

/// Divergence of the frozen classifier's answers on `recon` from its answers
/// on the data, plus `β·KL`, averaged over the batch. `data_logits` are the
/// classifier's logits on the original images.
#[allow(clippy::too_many_arguments)]
pub fn action_centric_terms(
    tape: &mut Tape,
    classifier: &Classifier,
    classifier_vars: &[Var],
    data_logits: &Tensor,
    labels: &[usize],
    recon: Var,
    mu: Var,
    logvar: Var,
    beta: f64,
    divergence: Divergence,
) -> Result<LossTerms> {
    let logits = classifier.frozen_logits(tape, classifier_vars, recon)?;
    let distortion = match divergence {
        Divergence::ClassifierKl => tape.softmax_kl(data_logits, logits)?,
        Divergence::LabelCrossEntropy => tape.softmax_cross_entropy(logits, labels)?,
    };
    let kl = tape.kl_diag_gaussian_vs_standard(mu, logvar)?;
    combine(tape, distortion, kl, beta)
}

fn check_open_unit(recon: &Tensor) -> Result<()> {
    if let Some(v) = recon.data().iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(ModelError::Invalid(format!("reconstruction value {v} outside (0, 1)")));
    }
    Ok(())
}

/// Vanilla objective evaluated on explicit reconstructions in `(0, 1)`.
pub fn vae_loss_vanilla(x: &Tensor, recon: &Tensor, mu: &Tensor, logvar: &Tensor, beta: f64) -> Result<f64> {
    check_open_unit(recon)?;
    let logit: Vec<f64> = recon.data().iter().map(|r| r.ln() - (-r).ln_1p()).collect();
    let mut tape = Tape::new();
    let l = tape.constant(Tensor::new(recon.shape().to_vec(), logit)?)?;
    let m = tape.constant(mu.clone())?;
    let v = tape.constant(logvar.clone())?;
    let t = vanilla_terms(&mut tape, x, l, m, v, beta)?;
    Ok(tape.value(t.loss).data()[0])
}

/// Classifier-query objective evaluated on explicit reconstructions.
#[allow(clippy::too_many_arguments)]
pub fn vae_loss_action_centric(
    x: &Tensor,
    labels: &[usize],
    recon: &Tensor,
    mu: &Tensor,
    logvar: &Tensor,
    beta: f64,
    classifier: &Classifier,
    divergence: Divergence,
) -> Result<f64> {
    check_open_unit(recon)?;
    let data_logits = classifier.predict(x.data())?;
    let mut tape = Tape::new();
    let vars = classifier.net.register(&mut tape, false)?;
    let r = tape.constant(recon.clone())?;
    let m = tape.constant(mu.clone())?;
    let v = tape.constant(logvar.clone())?;
    let t = action_centric_terms(&mut tape, classifier, &vars, &data_logits, labels, r, m, v, beta, divergence)?;
    Ok(tape.value(t.loss).data()[0])
}
