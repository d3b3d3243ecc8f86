//! Finite probability tables.
//!
//! Three shapes cover everything the measures need: a plain [`Pmf`], a
//! row-stochastic [`ConditionalPmf`] (rows index the conditioning symbol),
//! and an n-axis [`JointPmf`]. Constructors validate and never renormalize;
//! a table that is off by more than [`MASS_TOLERANCE`] is rejected.

use std::fmt::Write as _;

use crate::error::{InfoError, Result};

/// Allowed deviation of the total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-12;

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(InfoError::Empty);
    }
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(InfoError::InvalidProbability { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > MASS_TOLERANCE {
        return Err(InfoError::MassMismatch {
            sum,
            tolerance: MASS_TOLERANCE,
        });
    }
    Ok(())
}

/// A probability mass function over `0..len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(InfoError::Empty);
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(InfoError::ShapeMismatch {
                expected: format!("index < {n}"),
                found: at.to_string(),
            });
        }
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Ok(Self { probs })
    }

    /// Normalizes arbitrary non-negative weights. Only for callers that own
    /// the weights (random instance generation, solver internals).
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(InfoError::MassMismatch {
                sum,
                tolerance: MASS_TOLERANCE,
            });
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// A row-stochastic matrix `p(col | row)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ConditionalPmf {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(InfoError::Empty);
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(n_rows * cols);
        for row in rows {
            if row.len() != cols {
                return Err(InfoError::ShapeMismatch {
                    expected: format!("{cols} columns"),
                    found: format!("{} columns", row.len()),
                });
            }
            data.extend(row);
        }
        Self::from_flat(n_rows, cols, data)
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(InfoError::ShapeMismatch {
                expected: format!("{rows}x{cols} = {} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        if rows == 0 || cols == 0 {
            return Err(InfoError::Empty);
        }
        for r in 0..rows {
            validate_probs(&data[r * cols..(r + 1) * cols])?;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::from_flat(n, n, data)
    }

    /// Every row equal to `row`.
    pub fn constant(rows: usize, row: &Pmf) -> Result<Self> {
        let data = (0..rows).flat_map(|_| row.probs().iter().copied()).collect();
        Self::from_flat(rows, row.len(), data)
    }

    /// Deterministic map `row -> f(row)` as a 0/1 table.
    pub fn deterministic(rows: usize, cols: usize, f: impl Fn(usize) -> usize) -> Result<Self> {
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let c = f(r);
            if c >= cols {
                return Err(InfoError::ShapeMismatch {
                    expected: format!("column < {cols}"),
                    found: c.to_string(),
                });
            }
            data[r * cols + c] = 1.0;
        }
        Self::from_flat(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn row_pmf(&self, r: usize) -> Pmf {
        Pmf {
            probs: self.row(r).to_vec(),
        }
    }

    /// Output marginal `Σ_r p(r) p(c|r)`.
    pub fn push_forward(&self, input: &Pmf) -> Result<Pmf> {
        check_len(input.len(), self.rows, "input alphabet")?;
        let mut out = vec![0.0; self.cols];
        for (r, &pr) in input.probs().iter().enumerate() {
            for (o, &pc) in out.iter_mut().zip(self.row(r)) {
                *o += pr * pc;
            }
        }
        Pmf::new(out)
    }

    /// Channel composition `p(c|r) = Σ_m self(m|r) next(c|m)`.
    pub fn compose(&self, next: &ConditionalPmf) -> Result<ConditionalPmf> {
        check_len(next.rows, self.cols, "intermediate alphabet")?;
        let mut data = vec![0.0; self.rows * next.cols];
        for r in 0..self.rows {
            for m in 0..self.cols {
                let w = self.get(r, m);
                if w == 0.0 {
                    continue;
                }
                for c in 0..next.cols {
                    data[r * next.cols + c] += w * next.get(m, c);
                }
            }
        }
        ConditionalPmf::from_flat(self.rows, next.cols, data)
    }
}

pub(crate) fn check_len(found: usize, expected: usize, what: &str) -> Result<()> {
    if found != expected {
        return Err(InfoError::ShapeMismatch {
            expected: format!("{what} of size {expected}"),
            found: format!("size {found}"),
        });
    }
    Ok(())
}

/// A joint distribution over two or more finite variables, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    shape: Vec<usize>,
    labels: Vec<String>,
    table: Vec<f64>,
}

impl JointPmf {
    pub fn new(shape: Vec<usize>, labels: Vec<String>, table: Vec<f64>) -> Result<Self> {
        let size: usize = shape.iter().product();
        if shape.is_empty() || size == 0 {
            return Err(InfoError::Empty);
        }
        if labels.len() != shape.len() {
            return Err(InfoError::ShapeMismatch {
                expected: format!("{} axis labels", shape.len()),
                found: format!("{} labels", labels.len()),
            });
        }
        check_len(table.len(), size, "joint table")?;
        validate_probs(&table)?;
        Ok(Self {
            shape,
            labels,
            table,
        })
    }

    /// `p(a, b) = p(a) p(b|a)`.
    pub fn from_source_and_channel(source: &Pmf, channel: &ConditionalPmf) -> Result<Self> {
        check_len(channel.rows(), source.len(), "channel rows")?;
        let mut table = Vec::with_capacity(source.len() * channel.cols());
        for (a, &pa) in source.probs().iter().enumerate() {
            table.extend(channel.row(a).iter().map(|&pb| pa * pb));
        }
        Self::new(
            vec![source.len(), channel.cols()],
            vec!["A".into(), "B".into()],
            table,
        )
    }

    /// `p(x, q, z) = p(x) p(q|x) p(z|x)`: query and code both depend only on the data.
    pub fn from_markov(
        source: &Pmf,
        query: &ConditionalPmf,
        encoder: &ConditionalPmf,
    ) -> Result<Self> {
        check_len(query.rows(), source.len(), "query rows")?;
        check_len(encoder.rows(), source.len(), "encoder rows")?;
        let (nq, nz) = (query.cols(), encoder.cols());
        let mut table = Vec::with_capacity(source.len() * nq * nz);
        for (x, &px) in source.probs().iter().enumerate() {
            for &pq in query.row(x) {
                table.extend(encoder.row(x).iter().map(|&pz| px * pq * pz));
            }
        }
        Self::new(
            vec![source.len(), nq, nz],
            vec!["X".into(), "Q".into(), "Z".into()],
            table,
        )
    }

    pub fn with_labels(mut self, labels: &[&str]) -> Result<Self> {
        check_len(labels.len(), self.shape.len(), "labels")?;
        self.labels = labels.iter().map(|s| s.to_string()).collect();
        Ok(self)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        let strides = self.strides();
        let flat: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.table[flat]
    }

    /// Sums out every axis not listed in `keep`; the result's axes follow the
    /// order of `keep`.
    pub fn marginal(&self, keep: &[usize]) -> Result<JointPmf> {
        for &axis in keep {
            if axis >= self.ndim() {
                return Err(InfoError::AxisOutOfRange {
                    axis,
                    ndim: self.ndim(),
                });
            }
        }
        if keep.is_empty() {
            return Err(InfoError::Empty);
        }
        let out_shape: Vec<usize> = keep.iter().map(|&a| self.shape[a]).collect();
        let mut out_strides = vec![1; keep.len()];
        for i in (0..keep.len().saturating_sub(1)).rev() {
            out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
        }
        let mut out = vec![0.0; out_shape.iter().product()];
        let mut index = vec![0usize; self.ndim()];
        for &p in &self.table {
            let flat: usize = keep
                .iter()
                .zip(&out_strides)
                .map(|(&a, s)| index[a] * s)
                .sum();
            out[flat] += p;
            increment(&mut index, &self.shape);
        }
        Ok(JointPmf {
            shape: out_shape,
            labels: keep.iter().map(|&a| self.labels[a].clone()).collect(),
            table: out,
        })
    }

    pub fn marginal_pmf(&self, axis: usize) -> Result<Pmf> {
        Ok(Pmf {
            probs: self.marginal(&[axis])?.table,
        })
    }

    /// Collapses the joint into a single variable (row-major order).
    pub fn flatten(&self) -> Pmf {
        Pmf {
            probs: self.table.clone(),
        }
    }
}

/// Odometer increment over a row-major multi-index.
pub(crate) fn increment(index: &mut [usize], shape: &[usize]) {
    for axis in (0..shape.len()).rev() {
        index[axis] += 1;
        if index[axis] < shape[axis] {
            return;
        }
        index[axis] = 0;
    }
}

/// Plain-text tables: one row per line, space-separated decimals, `#` starts a
/// comment. A `# shape: a b c` comment carries the axes of a joint table.
pub mod text {
    use super::*;

    /// Parses rows of numbers, returning them with the declared shape if any.
    pub fn parse_rows(src: &str) -> Result<(Vec<Vec<f64>>, Option<Vec<usize>>)> {
        let mut rows = Vec::new();
        let mut shape = None;
        for (i, raw) in src.lines().enumerate() {
            let line_no = i + 1;
            let (body, comment) = match raw.find('#') {
                Some(pos) => (&raw[..pos], Some(&raw[pos + 1..])),
                None => (raw, None),
            };
            if let Some(rest) = comment.and_then(|c| c.trim().strip_prefix("shape:")) {
                let dims = rest
                    .split_whitespace()
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| InfoError::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                shape = Some(dims);
            }
            if body.trim().is_empty() {
                continue;
            }
            let row = body
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|e| InfoError::Parse {
                        line: line_no,
                        message: format!("{t:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok((rows, shape))
    }

    fn write_row(out: &mut String, row: &[f64]) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }

    pub fn pmf_to_string(p: &Pmf) -> String {
        let mut out = String::new();
        write_row(&mut out, p.probs());
        out
    }

    pub fn parse_pmf(src: &str) -> Result<Pmf> {
        let (rows, _) = parse_rows(src)?;
        if rows.len() != 1 {
            return Err(InfoError::Parse {
                line: 1,
                message: format!("expected exactly one row, found {}", rows.len()),
            });
        }
        Pmf::new(rows.into_iter().next().unwrap())
    }

    pub fn conditional_to_string(c: &ConditionalPmf) -> String {
        let mut out = String::new();
        for r in 0..c.rows() {
            write_row(&mut out, c.row(r));
        }
        out
    }

    pub fn parse_conditional(src: &str) -> Result<ConditionalPmf> {
        ConditionalPmf::new(parse_rows(src)?.0)
    }

    pub fn joint_to_string(j: &JointPmf) -> String {
        let mut out = String::new();
        let dims: Vec<String> = j.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "# axes: {}", j.labels().join(" "));
        let _ = writeln!(out, "# shape: {}", dims.join(" "));
        let last = *j.shape().last().unwrap();
        for chunk in j.table().chunks(last) {
            write_row(&mut out, chunk);
        }
        out
    }

    pub fn parse_joint(src: &str) -> Result<JointPmf> {
        let (rows, shape) = parse_rows(src)?;
        let table: Vec<f64> = rows.iter().flatten().copied().collect();
        let shape = shape.unwrap_or_else(|| vec![rows.len(), rows.first().map_or(0, Vec::len)]);
        let labels = (0..shape.len()).map(|i| format!("A{i}")).collect();
        JointPmf::new(shape, labels, table)
    }
}
