//! `rd-demo`: the rate-distortion curve of a uniform source under Hamming loss.

use std::path::Path;

use data_io::{write_csv, Cell};
use info_core::Pmf;
use rd_solver::{analytic_uniform_hamming, rd_curve, rd_point_at_distortion, DistortionMatrix, RdPoint};

use crate::error::{CliError, Result};

/// Target distortions whose slopes are located by bisection and added to the
/// default grid, so the curve passes through them exactly.
pub const DISTORTION_GRID: [f64; 14] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70,
];

pub fn default_slopes(m: usize) -> Result<Vec<f64>> {
    let p = Pmf::uniform(m)?;
    let d = DistortionMatrix::hamming(m);
    let dmax = 1.0 - 1.0 / m as f64;
    let mut slopes: Vec<f64> = (0..20).map(|i| (0.05f64.ln() + (20f64.ln() - 0.05f64.ln()) * i as f64 / 19.0).exp()).collect();
    for &target in DISTORTION_GRID.iter().filter(|&&t| t < dmax) {
        slopes.push(rd_point_at_distortion(&p, &d, target, 1e-12)?.slope);
    }
    Ok(slopes)
}

pub struct RdDemo {
    pub points: Vec<RdPoint>,
    /// The point whose distortion is nearest 0.5.
    pub nearest_half: RdPoint,
}

pub fn rd_demo(m: usize, slopes: Option<&[f64]>, out: &Path, meta: &[(String, String)]) -> Result<RdDemo> {
    if m < 2 {
        return Err(CliError::Validation("alphabet size must be at least 2".into()));
    }
    let owned;
    let slopes = match slopes {
        Some(s) => s,
        None => {
            owned = default_slopes(m)?;
            &owned
        }
    };
    let p = Pmf::uniform(m)?;
    let curve = rd_curve(&p, &DistortionMatrix::hamming(m), slopes)?;
    let rows = curve
        .points
        .iter()
        .map(|pt| {
            Ok(vec![
                Cell::Num(pt.slope),
                Cell::Num(pt.distortion),
                Cell::Num(pt.rate),
                Cell::Num(analytic_uniform_hamming(m, pt.distortion)?),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = meta.to_vec();
    meta.push(("alphabet".into(), m.to_string()));
    write_csv(out, &meta, &["slope", "distortion", "rate_bits", "analytic_bits"], &rows)?;
    let nearest_half = curve
        .points
        .iter()
        .min_by(|a, b| (a.distortion - 0.5).abs().total_cmp(&(b.distortion - 0.5).abs()))
        .cloned()
        .expect("curve is non-empty");
    Ok(RdDemo {
        points: curve.points,
        nearest_half,
    })
}
