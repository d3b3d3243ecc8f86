//! `pca`: principal components of posterior-mean latents by power iteration
//! with deflation.

use std::path::Path;

use data_io::{write_csv, Batch, Cell};
use models::Vae;

use crate::error::{CliError, Result};

pub const TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Unit eigenvectors, largest eigenvalue first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue over the covariance trace.
    pub explained: Vec<f64>,
    /// `n × k`, row-major.
    pub projections: Vec<f64>,
}

fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| (0..d).map(|j| m[i * d + j] * v[j]).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Removes the components along `basis` (orthonormal) from `v`.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for u in basis {
        let proj = dot(v, u);
        v.iter_mut().zip(u).for_each(|(s, x)| *s -= proj * x);
    }
}

/// Leading eigenpair of a symmetric positive semi-definite matrix. Stops when
/// the iterate moves less than `TOL` or the eigen-residual falls below
/// `TOL · scale`, which also covers repeated eigenvalues.
fn leading_eigenpair(m: &[f64], start: &[f64], found: &[Vec<f64>], scale: f64) -> Result<(f64, Vec<f64>)> {
    let component = found.len();
    let mut v = start.to_vec();
    orthogonalize(&mut v, found);
    if normalize(&mut v) == 0.0 {
        return Ok((0.0, v));
    }
    for _ in 0..MAX_ITER {
        let mut w = matvec(m, &v);
        orthogonalize(&mut w, found);
        let lambda = dot(&v, &w);
        let residual = w.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if residual <= TOL * scale {
            return Ok((lambda, v));
        }
        if normalize(&mut w) == 0.0 {
            return Ok((0.0, v));
        }
        let step = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = w;
        if step < TOL {
            return Ok((dot(&v, &matvec(m, &v)), v));
        }
    }
    Err(CliError::Numeric(format!(
        "power iteration for principal component {} did not converge in {MAX_ITER} iterations",
        component + 1
    )))
}

/// Top-`k` principal components of `n × d` row-major `latents`.
pub fn pca(latents: &[f64], d: usize, k: usize) -> Result<Pca> {
    if d == 0 || latents.is_empty() || latents.len() % d != 0 {
        return Err(CliError::Validation("latents must be a non-empty n × d table".into()));
    }
    if k == 0 || k > d {
        return Err(CliError::Validation(format!("component count {k} must be in 1..={d}")));
    }
    let n = latents.len() / d;
    if n < 2 {
        return Err(CliError::Validation("need at least two latent vectors".into()));
    }
    let mut mean = vec![0.0; d];
    for row in latents.chunks(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for row in latents.chunks(d) {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let scale = trace.max(f64::MIN_POSITIVE);
    let mut work = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut eigenvalues = Vec::new();
    for c in 0..k {
        let start: Vec<f64> = (0..d).map(|i| 1.0 / (i + 1) as f64 + 0.1 * ((i * 7 + c) % d) as f64).collect();
        let (lambda, v) = leading_eigenpair(&work, &start, &components, scale)?;
        for i in 0..d {
            for j in 0..d {
                work[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }
    let explained = eigenvalues.iter().map(|l| l / scale).collect();
    let projections = project(latents, d, &mean, &components);
    Ok(Pca {
        dim: d,
        mean,
        components,
        eigenvalues,
        explained,
        projections,
    })
}

/// `(z − mean) · v` for every latent and component.
pub fn project(latents: &[f64], d: usize, mean: &[f64], components: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(latents.len() / d * components.len());
    for row in latents.chunks(d) {
        for v in components {
            out.push(row.iter().zip(mean).zip(v).map(|((z, m), c)| (z - m) * c).sum());
        }
    }
    out
}

/// Writes `latents.csv`, `pca.csv` (`pc1..pck,label`) and
/// `pca_components.csv`, all at full round-trip precision.
pub fn write_pca(p: &Pca, latents: &[f64], labels: &[usize], out_dir: &Path, meta: &[(String, String)]) -> Result<()> {
    let d = p.dim;
    let k = p.components.len();
    let zcols: Vec<String> = (1..=d).map(|i| format!("z{i}")).collect();
    let mut cols: Vec<&str> = zcols.iter().map(String::as_str).collect();
    cols.push("label");
    let rows: Vec<Vec<Cell>> = latents
        .chunks(d)
        .zip(labels)
        .map(|(r, &l)| r.iter().map(|&v| Cell::Exact(v)).chain([Cell::Int(l as i64)]).collect())
        .collect();
    write_csv(&out_dir.join("latents.csv"), meta, &cols, &rows)?;

    let pcols: Vec<String> = (1..=k).map(|i| format!("pc{i}")).collect();
    let mut cols: Vec<&str> = pcols.iter().map(String::as_str).collect();
    cols.push("label");
    let rows: Vec<Vec<Cell>> = p
        .projections
        .chunks(k)
        .zip(labels)
        .map(|(r, &l)| r.iter().map(|&v| Cell::Exact(v)).chain([Cell::Int(l as i64)]).collect())
        .collect();
    write_csv(&out_dir.join("pca.csv"), meta, &cols, &rows)?;

    let vcols: Vec<String> = (1..=d).map(|i| format!("v{i}")).collect();
    let mut cols = vec!["component", "eigenvalue", "explained_variance"];
    cols.extend(vcols.iter().map(String::as_str));
    let mut rows = vec![[Cell::Text("mean".into()), Cell::Empty, Cell::Empty]
        .into_iter()
        .chain(p.mean.iter().map(|&m| Cell::Exact(m)))
        .collect::<Vec<_>>()];
    for (i, v) in p.components.iter().enumerate() {
        rows.push(
            [Cell::Text(format!("pc{}", i + 1)), Cell::Exact(p.eigenvalues[i]), Cell::Exact(p.explained[i])]
                .into_iter()
                .chain(v.iter().map(|&x| Cell::Exact(x)))
                .collect(),
        );
    }
    write_csv(&out_dir.join("pca_components.csv"), meta, &cols, &rows)?;
    Ok(())
}

/// Projects the posterior means of `batch` onto their top-`k` components.
pub fn latent_pca(vae: &Vae, batch: &Batch, k: usize, out_dir: &Path, meta: &[(String, String)]) -> Result<Pca> {
    if batch.labels.is_empty() {
        return Err(CliError::Validation("no images to encode".into()));
    }
    let r = vae.reconstruct(&batch.images)?;
    let d = r.mu.len() / batch.labels.len();
    let p = pca(&r.mu, d, k)?;
    let mut meta = meta.to_vec();
    meta.push(("components".into(), k.to_string()));
    meta.push(("images".into(), batch.labels.len().to_string()));
    write_pca(&p, &r.mu, &batch.labels, out_dir, &meta)?;
    Ok(p)
}
