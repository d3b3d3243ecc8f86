use std::f64::consts::LN_2;

use crate::classifier::{Classifier, CLASSES};
use crate::error::Result;
use crate::vae::Vae;

/// Closed-form `KL[N(μ, σ²) ‖ N(0, I)]` per image, in bits.
pub fn rate_bits_per_image(mu: &[f64], logvar: &[f64], latent_dim: usize) -> Vec<f64> {
    mu.chunks(latent_dim)
        .zip(logvar.chunks(latent_dim))
        .map(|(m, l)| {
            0.5 * m
                .iter()
                .zip(l)
                .map(|(m, l)| m * m + l.exp() - 1.0 - l)
                .sum::<f64>()
                / LN_2
        })
        .collect()
}

/// Mean rate in bits per image over `images`.
pub fn evaluate_rate(vae: &Vae, images: &[f64]) -> Result<f64> {
    let r = vae.reconstruct(images)?;
    let per = rate_bits_per_image(&r.mu, &r.logvar, vae.spec.latent_dim);
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

pub fn accuracy(logits: &[f64], labels: &[usize]) -> f64 {
    let hits = logits
        .chunks(CLASSES)
        .zip(labels)
        .filter(|(row, &y)| {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            best.0 == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

pub fn classifier_accuracy(classifier: &Classifier, images: &[f64], labels: &[usize]) -> Result<f64> {
    Ok(accuracy(classifier.predict(images)?.data(), labels))
}

/// Fraction of images whose mean-latent reconstruction the classifier labels
/// correctly.
pub fn evaluate_downstream(vae: &Vae, classifier: &Classifier, images: &[f64], labels: &[usize]) -> Result<f64> {
    let r = vae.reconstruct(images)?;
    classifier_accuracy(classifier, &r.recon, labels)
}

/// Everything measured on one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeEvaluation {
    pub rate_bits: f64,
    pub accuracy: f64,
    /// Per-pixel squared error of mean-latent reconstructions.
    pub mse: f64,
    /// Summed Bernoulli NLL per image, nats.
    pub bce: f64,
    /// `KL[softmax(cls(x)) ‖ softmax(cls(recon))]` per image, nats.
    pub classifier_kl: f64,
    /// Cross-entropy of `cls(recon)` against the labels, nats.
    pub label_ce: f64,
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

pub fn evaluate_vae(vae: &Vae, classifier: &Classifier, images: &[f64], labels: &[usize]) -> Result<VaeEvaluation> {
    let r = vae.reconstruct(images)?;
    let n = labels.len() as f64;
    let rate = rate_bits_per_image(&r.mu, &r.logvar, vae.spec.latent_dim).iter().sum::<f64>() / n;
    let mse = images.iter().zip(&r.recon).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / images.len() as f64;
    let bce = images
        .iter()
        .zip(&r.recon)
        .map(|(&x, &p)| {
            let p = p.clamp(1e-300, 1.0 - f64::EPSILON / 2.0);
            -(x * p.ln() + (1.0 - x) * (-p).ln_1p())
        })
        .sum::<f64>()
        / n;
    let data_logits = classifier.predict(images)?;
    let recon_logits = classifier.predict(&r.recon)?;
    let (mut kl, mut ce) = (0.0, 0.0);
    for ((a, b), &y) in data_logits
        .data()
        .chunks(CLASSES)
        .zip(recon_logits.data().chunks(CLASSES))
        .zip(labels)
    {
        let (la, lb) = (log_softmax(a), log_softmax(b));
        kl += la.iter().zip(&lb).map(|(p, q)| p.exp() * (p - q)).sum::<f64>();
        ce -= lb[y];
    }
    Ok(VaeEvaluation {
        rate_bits: rate,
        accuracy: accuracy(recon_logits.data(), labels),
        mse,
        bce,
        classifier_kl: kl / n,
        label_ce: ce / n,
    })
}
