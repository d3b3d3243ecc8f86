//! Rate-distortion functions and channel capacities of finite sources.
//!
//! Both quantities are computed with Blahut-Arimoto alternating
//! minimization. The rate-distortion solver is parameterized by the slope
//! `s > 0` of the curve (the Lagrange multiplier on distortion); larger slopes
//! give lower distortion and higher rate. [`rd_point_at_distortion`] inverts
//! that map by bisection when a specific distortion is wanted.

use std::f64::consts::LN_2;

use info_core::{ConditionalPmf, InfoError, JointPmf, Pmf};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

const NEGLIGIBLE: f64 = 1e-250;

#[derive(Debug, Clone, Error)]
pub enum RdError {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Distribution(#[from] InfoError),

    /// The solver hit `max_iter`; `last` is the final iterate.
    #[error("no convergence after {iterations} iterations at slope {slope}")]
    NonConvergence {
        slope: f64,
        iterations: usize,
        last: Box<RdPoint>,
    },

    #[error("capacity iteration did not converge after {iterations} iterations (gap {gap:e} bits)")]
    CapacityNonConvergence { iterations: usize, gap: f64 },
}

pub type Result<T, E = RdError> = std::result::Result<T, E>;

/// Non-negative per-symbol distortion; rows are source symbols, columns
/// reproduction symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMatrix {
    rows: usize,
    cols: usize,
    d: Vec<f64>,
}

impl DistortionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if n == 0 || cols == 0 {
            return Err(RdError::Invalid("empty distortion matrix".into()));
        }
        let mut d = Vec::with_capacity(n * cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(RdError::Invalid(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            d.extend(row);
        }
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(RdError::Invalid(format!(
                "entry ({}, {}) = {v} is not a finite non-negative distortion",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows: n, cols, d })
    }

    /// 0 on the diagonal, 1 elsewhere.
    pub fn hamming(m: usize) -> Self {
        let d = (0..m * m)
            .map(|i| if i / m == i % m { 0.0 } else { 1.0 })
            .collect();
        Self { rows: m, cols: m, d }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.d[x * self.cols + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.d[x * self.cols..(x + 1) * self.cols]
    }

    pub fn min(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.d.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A point on the rate-distortion curve together with the channel
/// `q(x̂ | x)` that achieves it.
#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub slope: f64,
    /// Bits per source symbol.
    pub rate: f64,
    pub distortion: f64,
    pub channel: ConditionalPmf,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    /// Sorted by increasing distortion.
    pub points: Vec<RdPoint>,
}

fn check_inputs(source: &Pmf, d: &DistortionMatrix) -> Result<()> {
    if d.rows() != source.len() {
        return Err(RdError::Invalid(format!(
            "distortion matrix has {} rows for a source of {} symbols",
            d.rows(),
            source.len()
        )));
    }
    Ok(())
}

/// Rate and distortion of `channel` against the output marginal it induces.
/// Rate is in nats.
fn evaluate(
    source: &Pmf,
    d: &DistortionMatrix,
    channel: &[f64],
    marginal: &[f64],
) -> (f64, f64) {
    let m = d.cols();
    let mut rate = 0.0;
    let mut dist = 0.0;
    for (x, &px) in source.probs().iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for y in 0..m {
            let q = channel[x * m + y];
            if q > 0.0 && marginal[y] > 0.0 {
                rate += px * q * (q / marginal[y]).ln();
                dist += px * q * d.get(x, y);
            }
        }
    }
    (rate.max(0.0), dist)
}

/// One Blahut-Arimoto run at a fixed slope.
///
/// Alternates the conditional update `q(x̂|x) ∝ r(x̂) exp(−s d(x, x̂))` with the
/// marginal update `r(x̂) = Σ_x p(x) q(x̂|x)` until both rate and distortion
/// move by less than `tol` between iterations.
pub fn blahut_arimoto_rd(
    source: &Pmf,
    d: &DistortionMatrix,
    slope: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RdPoint> {
    check_inputs(source, d)?;
    if !(slope > 0.0) || !slope.is_finite() {
        return Err(RdError::Invalid(format!("slope must be positive, got {slope}")));
    }
    if !(tol > 0.0) {
        return Err(RdError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let (n, m) = (d.rows(), d.cols());
    let mut marginal = vec![1.0 / m as f64; m];
    let mut channel = vec![0.0; n * m];
    let mut prev: Option<(f64, f64)> = None;
    #[cfg(debug_assertions)]
    let mut prev_objective = f64::INFINITY;

    for iter in 1..=max_iter {
        for x in 0..n {
            let row = &mut channel[x * m..(x + 1) * m];
            // Log-domain tilt shifted by the row maximum so large slopes
            // cannot underflow the whole row.
            let mut shift = f64::NEG_INFINITY;
            for y in 0..m {
                let l = if marginal[y] > 0.0 {
                    marginal[y].ln() - slope * d.get(x, y)
                } else {
                    f64::NEG_INFINITY
                };
                row[y] = l;
                shift = shift.max(l);
            }
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - shift).exp();
                // Mass this small only ever underflows further; drop it.
                if *v < NEGLIGIBLE {
                    *v = 0.0;
                }
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        marginal.iter_mut().for_each(|v| *v = 0.0);
        for (x, &px) in source.probs().iter().enumerate() {
            for y in 0..m {
                marginal[y] += px * channel[x * m + y];
            }
        }
        let (rate, dist) = evaluate(source, d, &channel, &marginal);

        #[cfg(debug_assertions)]
        {
            let objective = rate + slope * dist;
            debug_assert!(
                objective <= prev_objective + 1e-9 * (1.0 + prev_objective.abs()),
                "Blahut-Arimoto objective increased: {prev_objective} -> {objective}"
            );
            prev_objective = objective;
        }

        let rate_bits = rate / LN_2;
        let done = matches!(prev, Some((r0, d0)) if (rate_bits - r0).abs() < tol && (dist - d0).abs() < tol);
        prev = Some((rate_bits, dist));
        if done || iter == max_iter {
            let point = RdPoint {
                slope,
                rate: rate_bits,
                distortion: dist,
                channel: ConditionalPmf::from_flat(n, m, channel.clone())?,
                iterations: iter,
            };
            if done {
                return Ok(point);
            }
            return Err(RdError::NonConvergence {
                slope,
                iterations: iter,
                last: Box::new(point),
            });
        }
    }
    Err(RdError::Invalid("max_iter must be at least 1".into()))
}

/// Solves each slope and returns the points sorted by distortion.
pub fn rd_curve(source: &Pmf, d: &DistortionMatrix, slopes: &[f64]) -> Result<RdCurve> {
    rd_curve_with(source, d, slopes, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn rd_curve_with(
    source: &Pmf,
    d: &DistortionMatrix,
    slopes: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<RdCurve> {
    if slopes.is_empty() {
        return Err(RdError::Invalid("slope grid is empty".into()));
    }
    let mut points = slopes
        .iter()
        .map(|&s| blahut_arimoto_rd(source, d, s, tol, max_iter))
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| {
        a.distortion
            .total_cmp(&b.distortion)
            .then(b.slope.total_cmp(&a.slope))
    });
    for w in points.windows(2) {
        if w[1].rate > w[0].rate + 1e-6 {
            return Err(RdError::Invalid(format!(
                "rate increases with distortion between slopes {} and {}",
                w[0].slope, w[1].slope
            )));
        }
    }
    Ok(RdCurve { points })
}

/// Finds the slope whose optimal point has distortion `target` (within
/// `d_tol`) by bisection on `log s`. Distortion decreases monotonically in the
/// slope, so the bracket `[lo, hi]` must straddle the target.
pub fn rd_point_at_distortion(
    source: &Pmf,
    d: &DistortionMatrix,
    target: f64,
    d_tol: f64,
) -> Result<RdPoint> {
    let (mut lo, mut hi) = (1e-6_f64, 1e3_f64);
    let solve = |s: f64| blahut_arimoto_rd(source, d, s, DEFAULT_TOL, DEFAULT_MAX_ITER);
    let at_lo = solve(lo)?;
    let at_hi = solve(hi)?;
    if target > at_lo.distortion + d_tol || target < at_hi.distortion - d_tol {
        return Err(RdError::Invalid(format!(
            "target distortion {target} outside achievable range [{}, {}]",
            at_hi.distortion, at_lo.distortion
        )));
    }
    let mut best = if (at_lo.distortion - target).abs() < (at_hi.distortion - target).abs() {
        at_lo
    } else {
        at_hi
    };
    for _ in 0..200 {
        if (best.distortion - target).abs() <= d_tol {
            break;
        }
        let mid = (lo * hi).sqrt();
        let p = solve(mid)?;
        if p.distortion > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (p.distortion - target).abs() < (best.distortion - target).abs() {
            best = p;
        }
    }
    Ok(best)
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |v: f64| if v > 0.0 { -v * v.log2() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Closed-form `R(D) = log2 m − H_b(D) − D log2(m − 1)` for a uniform `m`-ary
/// source under Hamming distortion; zero once `D ≥ (m − 1)/m`.
pub fn analytic_uniform_hamming(m: usize, distortion: f64) -> Result<f64> {
    if m < 2 {
        return Err(RdError::Invalid(format!("alphabet size must be at least 2, got {m}")));
    }
    if !(0.0..=1.0).contains(&distortion) {
        return Err(RdError::Invalid(format!(
            "distortion {distortion} outside [0, 1]"
        )));
    }
    let mf = m as f64;
    if distortion >= (mf - 1.0) / mf {
        return Ok(0.0);
    }
    let r = mf.log2() - binary_entropy(distortion) - distortion * (mf - 1.0).log2();
    Ok(r.max(0.0))
}

/// Capacity of a discrete memoryless channel, in bits, with the input
/// distribution that achieves it.
#[derive(Debug, Clone, PartialEq)]
pub struct Capacity {
    pub capacity: f64,
    pub optimal_input: Pmf,
    pub iterations: usize,
}

/// Blahut-Arimoto capacity iteration. Stops once the upper bound
/// `log max_x c(x)` and lower bound `log Σ p(x) c(x)` are within `tol` bits;
/// the reported capacity is the lower bound, which the returned input attains.
pub fn channel_capacity(channel: &ConditionalPmf, tol: f64, max_iter: usize) -> Result<Capacity> {
    let (n, m) = (channel.rows(), channel.cols());
    let mut input = vec![1.0 / n as f64; n];
    let mut c = vec![0.0; n];
    let mut gap = f64::INFINITY;
    for iter in 1..=max_iter {
        let mut output = vec![0.0; m];
        for x in 0..n {
            for y in 0..m {
                output[y] += input[x] * channel.get(x, y);
            }
        }
        // c(x) = exp(KL[W(·|x) ‖ output]), kept in log form.
        for x in 0..n {
            c[x] = channel
                .row(x)
                .iter()
                .zip(&output)
                .filter(|(&w, _)| w > 0.0)
                .map(|(&w, &o)| w * (w / o).ln())
                .sum();
        }
        let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = input.iter().zip(&c).map(|(p, cx)| p * (cx - cmax).exp()).sum();
        let lower = cmax + z.ln();
        let upper = cmax;
        gap = (upper - lower) / LN_2;
        if gap < tol {
            let optimal_input = Pmf::new(input.clone())?;
            let joint = JointPmf::from_source_and_channel(&optimal_input, channel)?;
            return Ok(Capacity {
                capacity: info_core::mutual_information(&joint)?,
                optimal_input,
                iterations: iter,
            });
        }
        for x in 0..n {
            input[x] *= (c[x] - cmax).exp() / z;
        }
        let s: f64 = input.iter().sum();
        input.iter_mut().for_each(|p| *p /= s);
    }
    Err(RdError::CapacityNonConvergence {
        iterations: max_iter,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_matrix_shape() {
        let d = DistortionMatrix::hamming(3);
        assert_eq!(d.get(1, 1), 0.0);
        assert_eq!(d.get(1, 2), 1.0);
        assert!(DistortionMatrix::new(vec![vec![0.0, -1.0]]).is_err());
    }

    #[test]
    fn analytic_examples() {
        assert!((analytic_uniform_hamming(4, 0.0).unwrap() - 2.0).abs() < 1e-15);
        let r = analytic_uniform_hamming(4, 0.5).unwrap();
        assert!((r - (1.0 - 0.5 * 3f64.log2())).abs() < 1e-15);
        assert!((r - 0.20755).abs() < 1e-4);
        assert_eq!(analytic_uniform_hamming(4, 0.75).unwrap(), 0.0);
        assert!(analytic_uniform_hamming(4, 1.5).is_err());
        assert!(analytic_uniform_hamming(1, 0.1).is_err());
    }

    #[test]
    fn invalid_slope_and_tolerance() {
        let p = Pmf::uniform(2).unwrap();
        let d = DistortionMatrix::hamming(2);
        assert!(blahut_arimoto_rd(&p, &d, 0.0, 1e-10, 10).is_err());
        assert!(blahut_arimoto_rd(&p, &d, 1.0, 0.0, 10).is_err());
        assert!(blahut_arimoto_rd(&p, &DistortionMatrix::hamming(3), 1.0, 1e-9, 10).is_err());
        assert!(rd_curve(&p, &d, &[]).is_err());
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let p = Pmf::new(vec![0.7, 0.2, 0.1]).unwrap();
        let d = DistortionMatrix::new(vec![
            vec![0.0, 1.0, 4.0],
            vec![1.0, 0.0, 1.0],
            vec![4.0, 1.0, 0.0],
        ])
        .unwrap();
        match blahut_arimoto_rd(&p, &d, 0.9, 1e-15, 2) {
            Err(RdError::NonConvergence { slope, iterations, last }) => {
                assert_eq!(slope, 0.9);
                assert_eq!(iterations, 2);
                assert!(last.rate >= 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn large_slope_does_not_underflow() {
        let p = Pmf::uniform(4).unwrap();
        let pt = blahut_arimoto_rd(&p, &DistortionMatrix::hamming(4), 5000.0, 1e-10, 100).unwrap();
        assert!((pt.rate - 2.0).abs() < 1e-9);
        assert!(pt.distortion < 1e-12);
    }
}
