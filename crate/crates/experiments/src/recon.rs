//! `recon-dump`: input and reconstruction grids for the first test images.

use std::path::Path;

use data_io::{write_csv, write_image_grid, Cell, IMAGE_PIXELS};
use models::{classifier_accuracy, Classifier, Vae};

use crate::error::{CliError, Result};
use crate::training::Data;

pub const GRID_COLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconReport {
    pub mse: f64,
    pub accuracy: f64,
}

pub fn recon_dump(
    vae: &Vae,
    classifier: &Classifier,
    data: &Data,
    n: usize,
    out_dir: &Path,
    meta: &[(String, String)],
) -> Result<ReconReport> {
    if n == 0 {
        return Err(CliError::Validation("number of images must be at least 1".into()));
    }
    let n = n.min(data.test.len());
    let batch = data.probe(n);
    let r = vae.reconstruct(&batch.images)?;
    let split = |flat: &[f64]| flat.chunks(IMAGE_PIXELS).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let cols = GRID_COLS.min(n);
    let rows = n.div_ceil(cols);
    write_image_grid(&split(&batch.images), rows, cols, &out_dir.join("inputs.pgm"))?;
    write_image_grid(&split(&r.recon), rows, cols, &out_dir.join("reconstructions.pgm"))?;
    let mse = batch.images.iter().zip(&r.recon).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / batch.images.len() as f64;
    let accuracy = classifier_accuracy(classifier, &r.recon, &batch.labels)?;
    write_csv(
        &out_dir.join("recon_summary.csv"),
        meta,
        &["images", "mse", "accuracy"],
        &[vec![Cell::Int(n as i64), Cell::Num(mse), Cell::Num(accuracy)]],
    )?;
    Ok(ReconReport { mse, accuracy })
}
