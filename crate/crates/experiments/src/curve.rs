//! `curve`: merges sweep CSVs into per-mode rate/accuracy curves and pairs
//! the two modes at nearby rates.

use std::path::Path;

use data_io::{write_csv, Cell};

use crate::error::{CliError, Result};
use crate::training::{format_beta, SweepRow};

pub const RATE_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub action: SweepRow,
    pub vanilla: SweepRow,
}

impl Pairing {
    pub fn gap(&self) -> f64 {
        self.action.accuracy - self.vanilla.accuracy
    }
}

pub struct Curves {
    pub points: Vec<SweepRow>,
    pub pairs: Vec<Pairing>,
}

/// Successful rows of all inputs, sorted by mode then rate.
pub fn merge(paths: &[&Path]) -> Result<Vec<SweepRow>> {
    if paths.is_empty() {
        return Err(CliError::Validation("curve needs at least one sweep CSV".into()));
    }
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(SweepRow::read_all(p)?.into_iter().filter(SweepRow::ok));
    }
    rows.sort_by(|a, b| a.mode.cmp(&b.mode).then(a.rate_bits.total_cmp(&b.rate_bits)));
    Ok(rows)
}

/// Each action-centric point with the vanilla point nearest in rate, kept
/// only when the rates differ by at most one bit.
pub fn pair(points: &[SweepRow]) -> Vec<Pairing> {
    let vanilla: Vec<&SweepRow> = points.iter().filter(|r| r.mode == "vanilla").collect();
    points
        .iter()
        .filter(|r| r.mode == "action_centric")
        .filter_map(|a| {
            vanilla
                .iter()
                .min_by(|x, y| (x.rate_bits - a.rate_bits).abs().total_cmp(&(y.rate_bits - a.rate_bits).abs()))
                .filter(|v| (v.rate_bits - a.rate_bits).abs() <= RATE_WINDOW)
                .map(|v| Pairing {
                    action: a.clone(),
                    vanilla: (*v).clone(),
                })
        })
        .collect()
}

pub fn curve(paths: &[&Path], out_dir: &Path, meta: &[(String, String)]) -> Result<Curves> {
    let points = merge(paths)?;
    let pairs = pair(&points);
    let mut meta = meta.to_vec();
    meta.push((
        "inputs".into(),
        paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(" "),
    ));
    write_csv(
        &out_dir.join("curve.csv"),
        &meta,
        &["mode", "beta", "rate_bits", "accuracy", "distortion", "mse", "steps_to_70pct"],
        &points
            .iter()
            .map(|r| {
                vec![
                    Cell::Text(r.mode.clone()),
                    Cell::Text(format_beta(r.beta)),
                    Cell::Num(r.rate_bits),
                    Cell::Num(r.accuracy),
                    Cell::Num(r.distortion),
                    Cell::Num(r.mse),
                    r.steps_to_threshold.map(|v| v as i64).into(),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    meta.push(("rate_window_bits".into(), RATE_WINDOW.to_string()));
    write_csv(
        &out_dir.join("pairs.csv"),
        &meta,
        &[
            "action_beta",
            "action_rate_bits",
            "action_accuracy",
            "vanilla_beta",
            "vanilla_rate_bits",
            "vanilla_accuracy",
            "accuracy_gap",
        ],
        &pairs
            .iter()
            .map(|p| {
                vec![
                    Cell::Text(format_beta(p.action.beta)),
                    Cell::Num(p.action.rate_bits),
                    Cell::Num(p.action.accuracy),
                    Cell::Text(format_beta(p.vanilla.beta)),
                    Cell::Num(p.vanilla.rate_bits),
                    Cell::Num(p.vanilla.accuracy),
                    Cell::Num(p.gap()),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    Ok(Curves { points, pairs })
}

/// Highest-accuracy successful row of a mode.
pub fn best<'a>(rows: &'a [SweepRow], mode: &str) -> Option<&'a SweepRow> {
    rows.iter()
        .filter(|r| r.mode == mode && r.ok())
        .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy))
}
