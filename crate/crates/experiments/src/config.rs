//! Run settings: scale defaults, then the config file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use models::Divergence;
use toml::{Table, Value};

use crate::error::{io, CliError, Result};

pub const VANILLA_BETAS: [f64; 9] = [100.0, 40.0, 20.0, 10.0, 5.0, 1.0, 0.5, 0.1, 0.01];
pub const ACTION_BETAS: [f64; 10] = [6e-2, 3e-2, 1e-2, 6e-3, 3e-3, 1e-3, 5e-4, 1e-4, 1e-5, 1e-6];
pub const DATA_DIR_ENV: &str = "ACRD_DATA_DIR";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Desk,
}

impl FromStr for Scale {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            _ => Err(CliError::Validation(format!("unknown scale {s:?} (expected full or desk)"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub scale: Scale,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub classifier_epochs: usize,
    pub classifier_batch: usize,
    pub vae_epochs: usize,
    pub vae_batch: usize,
    pub lr: f64,
    pub probe_every: u64,
    pub probe_size: usize,
    pub threshold: f64,
    pub divergence: Divergence,
    pub decoder_channels: [usize; 2],
    pub vanilla_betas: Vec<f64>,
    pub action_betas: Vec<f64>,
    pub jobs: usize,
}

impl Settings {
    pub fn defaults(scale: Scale) -> Self {
        let (train_limit, test_limit, ce, ve) = match scale {
            Scale::Full => (None, None, 15, 20),
            Scale::Desk => (Some(10_000), Some(2_000), 5, 5),
        };
        Self {
            seed: 0,
            scale,
            data_dir: PathBuf::from("data/fashion-mnist"),
            out_dir: PathBuf::from(format!("runs/{scale}")),
            train_limit,
            test_limit,
            classifier_epochs: ce,
            classifier_batch: 64,
            vae_epochs: ve,
            vae_batch: 64,
            lr: 1e-3,
            probe_every: 20,
            probe_size: 512,
            threshold: 0.7,
            divergence: Divergence::ClassifierKl,
            decoder_channels: [32, 16],
            vanilla_betas: VANILLA_BETAS.to_vec(),
            action_betas: ACTION_BETAS.to_vec(),
            jobs: 1,
        }
    }

    /// Applies one `key = value` pair; keys are `section.name`.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        let bad = || CliError::Validation(format!("config key {key}: unexpected value {value}"));
        let int = |v: &Value| v.as_integer().filter(|i| *i >= 0).map(|i| i as u64).ok_or_else(bad);
        let real = |v: &Value| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)).ok_or_else(bad);
        let text = |v: &Value| v.as_str().map(String::from).ok_or_else(bad);
        let reals = |v: &Value| -> Result<Vec<f64>> {
            v.as_array().ok_or_else(bad)?.iter().map(real).collect()
        };
        match key {
            "run.seed" => self.seed = int(value)?,
            "run.scale" => {
                let scale: Scale = text(value)?.parse()?;
                if scale != self.scale {
                    return Err(CliError::Validation("run.scale must be set before other keys".into()));
                }
            }
            "run.data_dir" => self.data_dir = text(value)?.into(),
            "run.out_dir" => self.out_dir = text(value)?.into(),
            "run.train_limit" => self.train_limit = Some(int(value)? as usize),
            "run.test_limit" => self.test_limit = Some(int(value)? as usize),
            "classifier.epochs" => self.classifier_epochs = int(value)? as usize,
            "classifier.batch_size" => self.classifier_batch = int(value)? as usize,
            "vae.epochs" => self.vae_epochs = int(value)? as usize,
            "vae.batch_size" => self.vae_batch = int(value)? as usize,
            "vae.lr" => self.lr = real(value)?,
            "vae.probe_every" => self.probe_every = int(value)?,
            "vae.probe_size" => self.probe_size = int(value)? as usize,
            "vae.threshold" => self.threshold = real(value)?,
            "vae.divergence" => {
                self.divergence = text(value)?.parse().map_err(|e: models::ModelError| CliError::Validation(e.to_string()))?
            }
            "vae.decoder_channels" => {
                let v = reals(value)?;
                if v.len() != 2 || v.iter().any(|c| *c < 1.0 || c.fract() != 0.0) {
                    return Err(bad());
                }
                self.decoder_channels = [v[0] as usize, v[1] as usize];
            }
            "sweep.vanilla_betas" => self.vanilla_betas = reals(value)?,
            "sweep.action_betas" => self.action_betas = reals(value)?,
            "sweep.jobs" => self.jobs = int(value)? as usize,
            _ => return Err(CliError::Validation(format!("unknown config key {key}"))),
        }
        Ok(())
    }

    /// Scale defaults overlaid with a TOML file of `[run]`, `[classifier]`,
    /// `[vae]` and `[sweep]` sections.
    pub fn from_file(path: Option<&Path>, scale_flag: Option<Scale>) -> Result<Self> {
        let table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(io(p))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        let file_scale = table
            .get("run")
            .and_then(|r| r.get("scale"))
            .and_then(Value::as_str)
            .map(str::parse)
            .transpose()?;
        let scale = scale_flag.or(file_scale).unwrap_or(Scale::Desk);
        let mut s = Settings::defaults(scale);
        for (section, body) in &table {
            let body = body
                .as_table()
                .ok_or_else(|| CliError::Validation(format!("config entry {section} is not a section")))?;
            for (k, v) in body {
                if section == "run" && k == "scale" {
                    continue;
                }
                s.set(&format!("{section}.{k}"), v)?;
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(CliError::Validation(format!("{name} must be at least 1")))
            } else {
                Ok(())
            }
        };
        positive("classifier batch size", self.classifier_batch)?;
        positive("VAE batch size", self.vae_batch)?;
        positive("jobs", self.jobs)?;
        positive("probe size", self.probe_size)?;
        for &b in self.vanilla_betas.iter().chain(&self.action_betas) {
            if !(b > 0.0 && b.is_finite()) {
                return Err(CliError::Validation(format!("beta {b} must be positive")));
            }
        }
        if !(self.lr > 0.0) {
            return Err(CliError::Validation(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    /// Every setting as `key=value` pairs for output headers.
    pub fn meta(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| v.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ");
        let opt = |v: Option<usize>| v.map_or("all".to_string(), |n| n.to_string());
        vec![
            ("version".into(), VERSION.into()),
            ("seed".into(), self.seed.to_string()),
            ("scale".into(), self.scale.to_string()),
            ("train_limit".into(), opt(self.train_limit)),
            ("test_limit".into(), opt(self.test_limit)),
            ("classifier_epochs".into(), self.classifier_epochs.to_string()),
            ("classifier_batch".into(), self.classifier_batch.to_string()),
            ("vae_epochs".into(), self.vae_epochs.to_string()),
            ("vae_batch".into(), self.vae_batch.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("probe_every".into(), self.probe_every.to_string()),
            ("probe_size".into(), self.probe_size.to_string()),
            ("threshold".into(), self.threshold.to_string()),
            ("divergence".into(), self.divergence.to_string()),
            (
                "decoder_channels".into(),
                format!("{} {}", self.decoder_channels[0], self.decoder_channels[1]),
            ),
            ("vanilla_betas".into(), list(&self.vanilla_betas)),
            ("action_betas".into(), list(&self.action_betas)),
        ]
    }
}
