//! Entropy, divergences and (conditional) mutual information, in bits.
//!
//! Sums accumulate in nats and convert once at the end. Cells with zero mass
//! contribute nothing.

use std::f64::consts::LN_2;

use crate::dist::{check_len, JointPmf, Pmf};
use crate::error::{InfoError, Result};

pub fn entropy(p: &Pmf) -> f64 {
    let nats: f64 = p
        .probs()
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| -pi * pi.ln())
        .sum();
    (nats / LN_2).max(0.0)
}

/// `KL(p ‖ q)` in bits. Mass of `p` where `q` vanishes is reported as
/// [`InfoError::AbsoluteContinuity`] instead of an infinite value.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    check_len(q.len(), p.len(), "second distribution")?;
    kl_nats(p.probs(), q.probs()).map(|n| n / LN_2)
}

pub(crate) fn kl_nats(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(InfoError::AbsoluteContinuity { index, p: pi });
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc)
}

/// `½ Σ |p_i − q_i|`.
pub fn total_variation(p: &Pmf, q: &Pmf) -> Result<f64> {
    check_len(q.len(), p.len(), "second distribution")?;
    Ok(0.5 * p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn require_axes(j: &JointPmf, ndim: usize) -> Result<()> {
    if j.ndim() != ndim {
        return Err(InfoError::ShapeMismatch {
            expected: format!("{ndim}-axis joint"),
            found: format!("{}-axis joint", j.ndim()),
        });
    }
    Ok(())
}

/// `I(A;B)` in nats for a row-major `na × nb` table.
pub(crate) fn mi_nats(table: &[f64], na: usize, nb: usize) -> f64 {
    let mut pa = vec![0.0; na];
    let mut pb = vec![0.0; nb];
    for a in 0..na {
        for b in 0..nb {
            let p = table[a * nb + b];
            pa[a] += p;
            pb[b] += p;
        }
    }
    let mut acc = 0.0;
    for a in 0..na {
        for b in 0..nb {
            let p = table[a * nb + b];
            if p > 0.0 {
                acc += p * (p / (pa[a] * pb[b])).ln();
            }
        }
    }
    acc
}

/// `I(A;B)` for a two-axis joint.
pub fn mutual_information(j: &JointPmf) -> Result<f64> {
    require_axes(j, 2)?;
    let (na, nb) = (j.shape()[0], j.shape()[1]);
    Ok((mi_nats(j.table(), na, nb) / LN_2).max(0.0))
}

/// `I(A;B | C)` where `C` is `conditioned_axis` of a three-axis joint and
/// `A`, `B` are the remaining axes in order. Computed as
/// `Σ_c p(c) I(A;B | C = c)` over the conditional slices.
pub fn conditional_mutual_information(j: &JointPmf, conditioned_axis: usize) -> Result<f64> {
    require_axes(j, 3)?;
    if conditioned_axis >= 3 {
        return Err(InfoError::AxisOutOfRange {
            axis: conditioned_axis,
            ndim: 3,
        });
    }
    let (a_axis, b_axis) = match conditioned_axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let shape = j.shape();
    let (na, nb, nc) = (shape[a_axis], shape[b_axis], shape[conditioned_axis]);
    let mut slice = vec![0.0; na * nb];
    let mut index = [0usize; 3];
    let mut acc = 0.0;
    for c in 0..nc {
        index[conditioned_axis] = c;
        let mut pc = 0.0;
        for a in 0..na {
            index[a_axis] = a;
            for b in 0..nb {
                index[b_axis] = b;
                let p = j.get(&index);
                slice[a * nb + b] = p;
                pc += p;
            }
        }
        if pc <= 0.0 {
            continue;
        }
        slice.iter_mut().for_each(|p| *p /= pc);
        acc += pc * mi_nats(&slice, na, nb);
    }
    Ok((acc / LN_2).max(0.0))
}

/// `I(X;Q|Z)` for a joint over `(X, Q, Z)`: zero when the code is sufficient
/// for the query.
pub fn sufficiency_gap(j: &JointPmf) -> Result<f64> {
    conditional_mutual_information(j, 2)
}

/// `I(X;Z|Q)` for a joint over `(X, Q, Z)`: zero when the code carries nothing
/// beyond the query answer.
pub fn superfluousness_gap(j: &JointPmf) -> Result<f64> {
    let gap = conditional_mutual_information(j, 1)?;
    #[cfg(debug_assertions)]
    {
        let residual = superfluousness_identity_residual(j)?;
        debug_assert!(
            residual.abs() < 1e-12,
            "I(X;Z|Q) identity residual {residual:e}"
        );
    }
    Ok(gap)
}

/// `I(X;Z|Q) − [I(X;Z) − I(X;Q) + I(X;Q|Z)]` for a joint over `(X, Q, Z)`.
pub fn superfluousness_identity_residual(j: &JointPmf) -> Result<f64> {
    require_axes(j, 3)?;
    let i_xz_q = conditional_mutual_information(j, 1)?;
    let i_xq_z = conditional_mutual_information(j, 2)?;
    let i_xz = mutual_information(&j.marginal(&[0, 2])?)?;
    let i_xq = mutual_information(&j.marginal(&[0, 1])?)?;
    Ok(i_xz_q - (i_xz - i_xq + i_xq_z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ConditionalPmf;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn entropy_examples() {
        close(entropy(&Pmf::uniform(4).unwrap()), 2.0, 1e-15);
        assert_eq!(entropy(&Pmf::point_mass(5, 2).unwrap()), 0.0);
        close(entropy(&Pmf::new(vec![0.5, 0.25, 0.25]).unwrap()), 1.5, 1e-15);
    }

    #[test]
    fn kl_examples() {
        let p = Pmf::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let point = Pmf::new(vec![1.0, 0.0]).unwrap();
        let half = Pmf::uniform(2).unwrap();
        close(kl_divergence(&point, &half).unwrap(), 1.0, 1e-15);
        assert_eq!(
            kl_divergence(&half, &point),
            Err(InfoError::AbsoluteContinuity { index: 1, p: 0.5 })
        );
        assert!(kl_divergence(&p, &half).is_err());
    }

    #[test]
    fn mi_extremes() {
        let x = Pmf::uniform(4).unwrap();
        let copy = JointPmf::from_source_and_channel(&x, &ConditionalPmf::identity(4).unwrap())
            .unwrap();
        close(mutual_information(&copy).unwrap(), 2.0, 1e-15);
        let indep = JointPmf::from_source_and_channel(
            &x,
            &ConditionalPmf::constant(4, &Pmf::new(vec![0.1, 0.9]).unwrap()).unwrap(),
        )
        .unwrap();
        close(mutual_information(&indep).unwrap(), 0.0, 1e-15);
        assert!(mutual_information(&JointPmf::new(
            vec![2, 1, 1],
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.5, 0.5]
        )
        .unwrap())
        .is_err());
    }

    #[test]
    fn cmi_zero_on_markov_chain() {
        // A -> C -> B, stored with axes (A, B, C).
        let pa = [0.3, 0.7];
        let c_given_a = [[0.9, 0.1], [0.2, 0.8]];
        let b_given_c = [[0.6, 0.4], [0.25, 0.75]];
        let mut table = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    table.push(pa[a] * c_given_a[a][c] * b_given_c[c][b]);
                }
            }
        }
        let j = JointPmf::new(
            vec![2, 2, 2],
            vec!["A".into(), "B".into(), "C".into()],
            table,
        )
        .unwrap();
        close(conditional_mutual_information(&j, 2).unwrap(), 0.0, 1e-12);
        assert!(conditional_mutual_information(&j, 3).is_err());
    }

    #[test]
    fn code_equal_to_query_is_sufficient_and_not_superfluous() {
        let px = Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let coarse = ConditionalPmf::deterministic(4, 2, |x| x / 2).unwrap();
        let j = JointPmf::from_markov(&px, &coarse, &coarse).unwrap();
        close(sufficiency_gap(&j).unwrap(), 0.0, 1e-12);
        close(superfluousness_gap(&j).unwrap(), 0.0, 1e-12);
    }
}
