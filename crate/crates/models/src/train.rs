use std::f64::consts::LN_2;
use std::path::Path;

use data_io::{Batch, Batches, IdxDataset};
use tensor_autodiff::rng::{decode_state, encode_state, normal_vec, stream_rng, TrainRng};
use tensor_autodiff::{adam_step, AdamConfig, AdamState, AutodiffError, Checkpoint, Mode, Tape, Tensor, Var};

use crate::classifier::{Classifier, INPUT_SIDE};
use crate::error::{ModelError, Result};
use crate::eval::{accuracy, classifier_accuracy, evaluate_downstream};
use crate::loss::{action_centric_terms, vanilla_terms, Objective};
use crate::net::Net;
use crate::vae::{Vae, VaeSpec};

const TRAIN_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Probe the downstream accuracy every this many steps; 0 disables.
    pub probe_every: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed,
            probe_every: 0,
        }
    }

    /// Everything except the epoch budget, so a longer run can resume a shorter one.
    fn fingerprint(&self) -> String {
        format!(
            "batch={} lr={} b1={} b2={} eps={} seed={} probe={}",
            self.batch_size, self.adam.lr, self.adam.beta1, self.adam.beta2, self.adam.eps, self.seed, self.probe_every
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetric {
    pub step: u64,
    pub loss: f64,
    /// Mean batch rate in bits per image (classifier runs: batch accuracy).
    pub rate_bits: f64,
    pub probe_accuracy: Option<f64>,
}

/// First logged step whose probe accuracy reaches `threshold`.
pub fn steps_to_threshold(metrics: &[StepMetric], threshold: f64) -> Option<u64> {
    metrics
        .iter()
        .find(|m| m.probe_accuracy.is_some_and(|a| a >= threshold))
        .map(|m| m.step)
}

fn image_tensor(images: &[f64]) -> Result<Tensor> {
    let n = images.len() / (INPUT_SIDE * INPUT_SIDE);
    Ok(Tensor::new(vec![n, 1, INPUT_SIDE, INPUT_SIDE], images.to_vec())?)
}

fn at_step(step: u64) -> impl Fn(ModelError) -> ModelError {
    move |e| match e {
        ModelError::Autodiff(AutodiffError::NonFinite { op }) => ModelError::Diverged {
            step,
            message: format!("{op} produced a non-finite value"),
        },
        other => other,
    }
}

fn collect_grads(tape: &Tape, loss: Var, vars: &[Var]) -> Result<Vec<Tensor>> {
    let mut g = tape.backward(loss)?;
    Ok(vars
        .iter()
        .map(|&v| g.take(v).unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
        .collect())
}

/// Optimizer, generator and progress carried across epochs.
struct Progress {
    adam: AdamState,
    rng: TrainRng,
    step: u64,
    epochs_done: usize,
    metrics: Vec<StepMetric>,
}

impl Progress {
    fn fresh(net: &Net, seed: u64) -> Self {
        Self {
            adam: AdamState::new(&net.params),
            rng: stream_rng(seed, TRAIN_STREAM),
            step: 0,
            epochs_done: 0,
            metrics: Vec::new(),
        }
    }

    fn save(&self, net: &Net, kind: &str, fingerprint: &str, path: &Path) -> Result<()> {
        let mut ck = Checkpoint::default();
        ck.meta.insert("kind".into(), format!("{kind}-state"));
        ck.meta.insert("fingerprint".into(), fingerprint.into());
        ck.meta.insert("step".into(), self.step.to_string());
        ck.meta.insert("epochs_done".into(), self.epochs_done.to_string());
        ck.meta.insert("adam_step".into(), self.adam.step_count.to_string());
        ck.meta.insert("rng".into(), encode_state(&self.rng));
        net.write_into(&mut ck, "model.");
        for (i, name) in net.names.iter().enumerate() {
            ck.push(format!("adam.m.{name}"), self.adam.first_moment[i].clone());
            ck.push(format!("adam.v.{name}"), self.adam.second_moment[i].clone());
        }
        if !self.metrics.is_empty() {
            let flat = self
                .metrics
                .iter()
                .flat_map(|m| [m.step as f64, m.loss, m.rate_bits, m.probe_accuracy.unwrap_or(-1.0)])
                .collect();
            ck.push("metrics", Tensor::new(vec![self.metrics.len(), 4], flat)?);
        }
        Ok(ck.save(path)?)
    }

    fn load(net: &mut Net, kind: &str, fingerprint: &str, path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let bad = |m: &str| ModelError::Config(format!("{}: {m}", path.display()));
        if ck.meta.get("kind").map(String::as_str) != Some(&format!("{kind}-state")) {
            return Err(bad("not a training state of this kind"));
        }
        if ck.meta.get("fingerprint").map(String::as_str) != Some(fingerprint) {
            return Err(bad("training state was written with a different configuration"));
        }
        let num = |k: &str| -> Result<u64> {
            ck.meta
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(&format!("missing {k}")))
        };
        net.read_from(&ck, "model.")?;
        let mut adam = AdamState::new(&net.params);
        adam.step_count = num("adam_step")?;
        for (i, name) in net.names.iter().enumerate() {
            for (store, tag) in [(&mut adam.first_moment[i], "m"), (&mut adam.second_moment[i], "v")] {
                let t = ck.get(&format!("adam.{tag}.{name}")).ok_or_else(|| bad("missing optimizer state"))?;
                if t.shape() != store.shape() {
                    return Err(bad("optimizer state shape mismatch"));
                }
                *store = t.clone();
            }
        }
        let rng = ck
            .meta
            .get("rng")
            .and_then(|s| decode_state(s))
            .ok_or_else(|| bad("missing generator state"))?;
        let metrics = ck
            .get("metrics")
            .map(|t| {
                t.data()
                    .chunks(4)
                    .map(|r| StepMetric {
                        step: r[0] as u64,
                        loss: r[1],
                        rate_bits: r[2],
                        probe_accuracy: (r[3] >= 0.0).then_some(r[3]),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(Self {
            adam,
            rng,
            step: num("step")?,
            epochs_done: num("epochs_done")? as usize,
            metrics,
        })
    }
}

pub struct ClassifierRun {
    pub classifier: Classifier,
    pub metrics: Vec<StepMetric>,
}

/// Trains the classifier with mean cross-entropy. With `state_path` the run
/// is checkpointed after every epoch and resumed from it when present.
pub fn classifier_train(train: &IdxDataset, cfg: &TrainConfig, state_path: Option<&Path>) -> Result<ClassifierRun> {
    let mut cls = Classifier::new(cfg.seed);
    let fp = cfg.fingerprint();
    let mut p = match state_path.filter(|p| p.exists()) {
        Some(path) => Progress::load(&mut cls.net, "classifier", &fp, path)?,
        None => Progress::fresh(&cls.net, cfg.seed),
    };
    for epoch in p.epochs_done..cfg.epochs {
        for batch in Batches::new(train, cfg.batch_size, cfg.seed, epoch as u64)? {
            p.step += 1;
            let step = p.step;
            let mut tape = Tape::new();
            let vars = cls.net.register(&mut tape, true)?;
            let x = tape.constant(image_tensor(&batch.images)?)?;
            let terms = (|| -> Result<(Var, Var)> {
                let logits = cls.forward(&mut tape, &vars, x, Mode::Train, &mut p.rng)?;
                let ce = tape.softmax_cross_entropy(logits, &batch.labels)?;
                Ok((tape.mean(ce)?, logits))
            })()
            .map_err(at_step(step))?;
            let grads = collect_grads(&tape, terms.0, &vars)?;
            adam_step(&mut cls.net.params, &grads, &mut p.adam, &cfg.adam)?;
            p.metrics.push(StepMetric {
                step,
                loss: tape.value(terms.0).data()[0],
                rate_bits: accuracy(tape.value(terms.1).data(), &batch.labels),
                probe_accuracy: None,
            });
        }
        p.epochs_done = epoch + 1;
        if let Some(path) = state_path {
            p.save(&cls.net, "classifier", &fp, path)?;
        }
    }
    Ok(ClassifierRun {
        classifier: cls,
        metrics: p.metrics,
    })
}

pub struct VaeRun {
    pub vae: Vae,
    pub metrics: Vec<StepMetric>,
}

/// Trains a VAE under `objective`. The classifier is required for the
/// classifier-query objective and for probing; it is never modified.
pub fn vae_train(
    train: &IdxDataset,
    objective: Objective,
    classifier: Option<&Classifier>,
    probe: Option<&Batch>,
    spec: VaeSpec,
    cfg: &TrainConfig,
    state_path: Option<&Path>,
) -> Result<VaeRun> {
    if matches!(objective, Objective::ActionCentric { .. }) && classifier.is_none() {
        return Err(ModelError::Config("classifier-query objective needs a classifier checkpoint".into()));
    }
    if cfg.probe_every > 0 && (classifier.is_none() || probe.is_none()) {
        return Err(ModelError::Config("probing needs a classifier and a probe batch".into()));
    }
    let mut vae = Vae::new(spec, cfg.seed);
    let fp = format!("{} {objective:?} {spec:?}", cfg.fingerprint());
    let mut p = match state_path.filter(|p| p.exists()) {
        Some(path) => Progress::load(&mut vae.net, "vae", &fp, path)?,
        None => Progress::fresh(&vae.net, cfg.seed),
    };
    let d = spec.latent_dim;
    for epoch in p.epochs_done..cfg.epochs {
        for batch in Batches::new(train, cfg.batch_size, cfg.seed, epoch as u64)? {
            p.step += 1;
            let step = p.step;
            let n = batch.len();
            let x = image_tensor(&batch.images)?;
            let eps = Tensor::new(vec![n, d], normal_vec(&mut p.rng, n * d))?;
            let mut tape = Tape::new();
            let vars = vae.net.register(&mut tape, true)?;
            let terms = (|| {
                let xv = tape.constant(x.clone())?;
                let pass = vae.pass(&mut tape, &vars, xv, &eps, Mode::Train)?;
                match objective {
                    Objective::Vanilla { beta } => vanilla_terms(&mut tape, &x, pass.logits, pass.mu, pass.logvar, beta),
                    Objective::ActionCentric { beta, divergence } => {
                        let cls = classifier.expect("checked above");
                        let data_logits = cls.predict(x.data())?;
                        let cvars = cls.net.register(&mut tape, false)?;
                        let recon = tape.sigmoid(pass.logits)?;
                        action_centric_terms(
                            &mut tape,
                            cls,
                            &cvars,
                            &data_logits,
                            &batch.labels,
                            recon,
                            pass.mu,
                            pass.logvar,
                            beta,
                            divergence,
                        )
                    }
                }
            })()
            .map_err(at_step(step))?;
            let grads = collect_grads(&tape, terms.loss, &vars)?;
            adam_step(&mut vae.net.params, &grads, &mut p.adam, &cfg.adam)?;
            let kl = tape.value(terms.kl).data();
            let probe_accuracy = if cfg.probe_every > 0 && step % cfg.probe_every == 0 {
                let probe = probe.expect("checked above");
                Some(evaluate_downstream(&vae, classifier.expect("checked above"), &probe.images, &probe.labels)?)
            } else {
                None
            };
            p.metrics.push(StepMetric {
                step,
                loss: tape.value(terms.loss).data()[0],
                rate_bits: kl.iter().sum::<f64>() / kl.len() as f64 / LN_2,
                probe_accuracy,
            });
        }
        p.epochs_done = epoch + 1;
        if let Some(path) = state_path {
            p.save(&vae.net, "vae", &fp, path)?;
        }
    }
    Ok(VaeRun { vae, metrics: p.metrics })
}

/// Test accuracy of a trained classifier on a dataset.
pub fn classifier_test_accuracy(cls: &Classifier, ds: &IdxDataset) -> Result<f64> {
    let b = Batch::from_indices(ds, &(0..ds.len()).collect::<Vec<_>>());
    classifier_accuracy(cls, &b.images, &b.labels)
}
