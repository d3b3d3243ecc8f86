//! `train-classifier`, `train-vae` and `sweep`.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use data_io::{load_split, read_csv, write_csv, Batch, Cell, IdxDataset, Split};
use models::{
    classifier_test_accuracy, classifier_train, evaluate_vae, steps_to_threshold, vae_train, Classifier, Objective,
    StepMetric, TrainConfig, Vae, VaeSpec,
};
use tensor_autodiff::Checkpoint;

use crate::config::Settings;
use crate::error::{CliError, Result};

pub const SWEEP_COLUMNS: [&str; 9] = [
    "mode",
    "beta",
    "rate_bits",
    "distortion",
    "nll_nats",
    "accuracy",
    "mse",
    "steps_to_70pct",
    "status",
];

pub struct Data {
    pub train: IdxDataset,
    pub test: IdxDataset,
}

impl Data {
    pub fn load(s: &Settings) -> Result<Self> {
        let mut train = load_split(&s.data_dir, Split::Train)?;
        let mut test = load_split(&s.data_dir, Split::Test)?;
        if let Some(n) = s.train_limit {
            train = train.head(n);
        }
        if let Some(n) = s.test_limit {
            test = test.head(n);
        }
        if train.is_empty() || test.is_empty() {
            return Err(CliError::Validation("empty training or test set".into()));
        }
        Ok(Self { train, test })
    }

    pub fn test_batch(&self) -> Batch {
        Batch::from_indices(&self.test, &(0..self.test.len()).collect::<Vec<_>>())
    }

    pub fn probe(&self, size: usize) -> Batch {
        Batch::from_indices(&self.test, &(0..size.min(self.test.len())).collect::<Vec<_>>())
    }
}

pub fn classifier_path(s: &Settings) -> PathBuf {
    s.out_dir.join("classifier").join("classifier.ckpt")
}

pub fn load_classifier(path: &Path) -> Result<Classifier> {
    if !path.exists() {
        return Err(CliError::Validation(format!(
            "classifier checkpoint {} is missing; run train-classifier first",
            path.display()
        )));
    }
    Ok(Classifier::from_checkpoint(&Checkpoint::load(path)?)?)
}

fn metrics_rows(metrics: &[StepMetric]) -> Vec<Vec<Cell>> {
    metrics
        .iter()
        .map(|m| {
            vec![
                Cell::Int(m.step as i64),
                Cell::Num(m.loss),
                Cell::Num(m.rate_bits),
                m.probe_accuracy.into(),
            ]
        })
        .collect()
}

/// Trains (or reuses) the classifier and reports its test accuracy.
pub fn train_classifier(s: &Settings, data: &Data) -> Result<f64> {
    let dir = s.out_dir.join("classifier");
    let ckpt = dir.join("classifier.ckpt");
    let cls = if ckpt.exists() {
        load_classifier(&ckpt)?
    } else {
        let mut cfg = TrainConfig::new(s.classifier_epochs, s.seed);
        cfg.batch_size = s.classifier_batch;
        cfg.adam.lr = s.lr;
        let run = classifier_train(&data.train, &cfg, Some(&dir.join("state.ckpt")))?;
        write_csv(
            &dir.join("metrics.csv"),
            &s.meta(),
            &["step", "loss", "batch_accuracy", "probe_accuracy"],
            &metrics_rows(&run.metrics),
        )?;
        run.classifier.to_checkpoint().save(&ckpt)?;
        run.classifier
    };
    let acc = classifier_test_accuracy(&cls, &data.test)?;
    write_csv(
        &dir.join("summary.csv"),
        &s.meta(),
        &["train_size", "test_size", "epochs", "test_accuracy"],
        &[vec![
            Cell::Int(data.train.len() as i64),
            Cell::Int(data.test.len() as i64),
            Cell::Int(s.classifier_epochs as i64),
            Cell::Num(acc),
        ]],
    )?;
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mode: String,
    pub beta: f64,
    pub rate_bits: f64,
    pub distortion: f64,
    pub nll_nats: f64,
    pub accuracy: f64,
    pub mse: f64,
    pub steps_to_threshold: Option<u64>,
    pub status: String,
}

impl SweepRow {
    fn failed(mode: &str, beta: f64, message: String) -> Self {
        Self {
            mode: mode.into(),
            beta,
            rate_bits: f64::NAN,
            distortion: f64::NAN,
            nll_nats: f64::NAN,
            accuracy: f64::NAN,
            mse: f64::NAN,
            steps_to_threshold: None,
            status: format!("failed: {}", message.replace([',', '\n'], ";")),
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let num = |v: f64| if v.is_finite() { Cell::Num(v) } else { Cell::Empty };
        vec![
            Cell::Text(self.mode.clone()),
            Cell::Text(format_beta(self.beta)),
            num(self.rate_bits),
            num(self.distortion),
            num(self.nll_nats),
            num(self.accuracy),
            num(self.mse),
            self.steps_to_threshold.map(|v| v as i64).into(),
            Cell::Text(self.status.clone()),
        ]
    }

    pub fn read_all(path: &Path) -> Result<Vec<SweepRow>> {
        let t = read_csv(path)?;
        let modes = t.text("mode")?;
        let status = t.text("status")?;
        let col = |n: &str| t.numbers(n);
        let (beta, rate, dist, nll, acc, mse, steps) = (
            col("beta")?,
            col("rate_bits")?,
            col("distortion")?,
            col("nll_nats")?,
            col("accuracy")?,
            col("mse")?,
            col("steps_to_70pct")?,
        );
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        (0..t.rows.len())
            .map(|i| {
                let b = beta[i].ok_or_else(|| CliError::Validation(format!("{}:{}: missing beta", path.display(), t.rows[i].0)))?;
                Ok(SweepRow {
                    mode: modes[i].to_string(),
                    beta: b,
                    rate_bits: nan(rate[i]),
                    distortion: nan(dist[i]),
                    nll_nats: nan(nll[i]),
                    accuracy: nan(acc[i]),
                    mse: nan(mse[i]),
                    steps_to_threshold: steps[i].map(|v| v as u64),
                    status: status[i].to_string(),
                })
            })
            .collect()
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Shortest text that parses back to the same value.
pub fn format_beta(beta: f64) -> String {
    beta.to_string()
}

pub fn vae_dir(s: &Settings, mode: &str, beta: f64) -> PathBuf {
    s.out_dir.join("vae").join(format!("{mode}_beta{}", format_beta(beta)))
}

/// Trains one VAE unless its checkpoint and record already exist, then
/// returns its evaluated record.
pub fn run_vae(s: &Settings, data: &Data, objective: Objective, classifier: &Classifier) -> Result<SweepRow> {
    let dir = vae_dir(s, objective.mode(), objective.beta());
    let ckpt = dir.join("model.ckpt");
    let record = dir.join("record.csv");
    if ckpt.exists() && record.exists() {
        if let Some(row) = SweepRow::read_all(&record)?.into_iter().next() {
            return Ok(row);
        }
    }
    let mut cfg = TrainConfig::new(s.vae_epochs, s.seed);
    cfg.batch_size = s.vae_batch;
    cfg.adam.lr = s.lr;
    cfg.probe_every = s.probe_every;
    let probe = data.probe(s.probe_size);
    let spec = VaeSpec {
        latent_dim: 8,
        decoder_channels: s.decoder_channels,
    };
    let run = vae_train(
        &data.train,
        objective,
        Some(classifier),
        (s.probe_every > 0).then_some(&probe),
        spec,
        &cfg,
        Some(&dir.join("state.ckpt")),
    )?;
    let mut meta = s.meta();
    meta.push(("mode".into(), objective.mode().into()));
    meta.push(("beta".into(), format_beta(objective.beta())));
    write_csv(
        &dir.join("metrics.csv"),
        &meta,
        &["step", "loss", "rate_bits", "probe_accuracy"],
        &metrics_rows(&run.metrics),
    )?;
    let row = evaluate_row(&run.vae, classifier, data, objective, &run.metrics, s.threshold)?;
    run.vae.to_checkpoint().save(&ckpt)?;
    write_csv(&record, &meta, &SWEEP_COLUMNS, &[row.cells()])?;
    // Reading back keeps fresh and resumed sweeps byte-identical.
    Ok(SweepRow::read_all(&record)?.remove(0))
}

fn evaluate_row(
    vae: &Vae,
    classifier: &Classifier,
    data: &Data,
    objective: Objective,
    metrics: &[StepMetric],
    threshold: f64,
) -> Result<SweepRow> {
    let test = data.test_batch();
    let e = evaluate_vae(vae, classifier, &test.images, &test.labels)?;
    let distortion = match objective {
        Objective::Vanilla { .. } => e.bce,
        Objective::ActionCentric { divergence, .. } => match divergence {
            models::Divergence::ClassifierKl => e.classifier_kl,
            models::Divergence::LabelCrossEntropy => e.label_ce,
        },
    };
    Ok(SweepRow {
        mode: objective.mode().into(),
        beta: objective.beta(),
        rate_bits: e.rate_bits,
        distortion,
        nll_nats: e.bce,
        accuracy: e.accuracy,
        mse: e.mse,
        steps_to_threshold: steps_to_threshold(metrics, threshold),
        status: "ok".into(),
    })
}

pub fn objectives(s: &Settings, modes: &[&str]) -> Result<Vec<Objective>> {
    let mut out = Vec::new();
    for &mode in modes {
        let betas = match mode {
            "vanilla" => &s.vanilla_betas,
            "action_centric" => &s.action_betas,
            _ => return Err(CliError::Validation(format!("unknown mode {mode:?}"))),
        };
        for &b in betas {
            out.push(Objective::new(mode, b, s.divergence)?);
        }
    }
    Ok(out)
}

/// Runs every objective, up to `s.jobs` at a time, and writes the sweep CSV.
/// Failed runs become rows with a `failed: ...` status.
pub fn sweep(s: &Settings, data: &Data, classifier: &Classifier, modes: &[&str], out: &Path) -> Result<Vec<SweepRow>> {
    let jobs = objectives(s, modes)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = s.jobs.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(obj) = jobs.get(i) else { break };
                let row = match run_vae(s, data, *obj, classifier) {
                    Ok(r) => r,
                    Err(e) => SweepRow::failed(obj.mode(), obj.beta(), e.to_string()),
                };
                eprintln!(
                    "[{}/{}] {} beta={} rate={:.3} bits accuracy={:.4} {}",
                    i + 1,
                    jobs.len(),
                    row.mode,
                    format_beta(row.beta),
                    row.rate_bits,
                    row.accuracy,
                    row.status
                );
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = results.into_inner().unwrap().into_iter().map(Option::unwrap).collect();
    let mut meta = s.meta();
    meta.push(("modes".into(), modes.join(" ")));
    write_csv(out, &meta, &SWEEP_COLUMNS, &rows.iter().map(SweepRow::cells).collect::<Vec<_>>())?;
    Ok(rows)
}
