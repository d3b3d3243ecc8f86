//! Numerical checks of the rate bound carried by the expected complexity, and
//! of the multiview query equality.

use std::f64::consts::LN_2;

use crate::dist::{check_len, ConditionalPmf, JointPmf, Pmf};
use crate::error::Result;
use crate::measures::{kl_nats, mi_nats, mutual_information};

/// Decomposition `E_x KL[q(z|x) ‖ p(z)] = I(X;Z) + KL[q(z) ‖ p(z)]`, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityBound {
    pub expected_kl: f64,
    pub mutual_info: f64,
    pub marginal_kl: f64,
}

impl ComplexityBound {
    pub fn residual(&self) -> f64 {
        self.expected_kl - (self.mutual_info + self.marginal_kl)
    }
}

pub fn complexity_bound_check(
    encoder: &ConditionalPmf,
    prior: &Pmf,
    data_dist: &Pmf,
) -> Result<ComplexityBound> {
    check_len(encoder.rows(), data_dist.len(), "encoder rows")?;
    check_len(prior.len(), encoder.cols(), "prior alphabet")?;
    let mut expected = 0.0;
    for (x, &px) in data_dist.probs().iter().enumerate() {
        if px > 0.0 {
            expected += px * kl_nats(encoder.row(x), prior.probs())?;
        }
    }
    let marginal = encoder.push_forward(data_dist)?;
    let joint = JointPmf::from_source_and_channel(data_dist, encoder)?;
    let out = ComplexityBound {
        expected_kl: expected / LN_2,
        mutual_info: mutual_information(&joint)?,
        marginal_kl: kl_nats(marginal.probs(), prior.probs())? / LN_2,
    };
    debug_assert!(
        out.residual().abs() < 1e-12,
        "complexity decomposition residual {:e}",
        out.residual()
    );
    Ok(out)
}

/// `I(Q;Z)` and `I(X;Z)` where the query is the pair `(X, X')` of a view and
/// its transform `x' ~ t(x'|x)`, and the code depends on `X` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiviewInfo {
    pub i_qz: f64,
    pub i_xz: f64,
}

pub fn multiview_query_check(
    view_transform: &ConditionalPmf,
    encoder: &ConditionalPmf,
    data_dist: &Pmf,
) -> Result<MultiviewInfo> {
    let nx = data_dist.len();
    check_len(view_transform.rows(), nx, "transform rows")?;
    check_len(encoder.rows(), nx, "encoder rows")?;
    let (nv, nz) = (view_transform.cols(), encoder.cols());
    // Rows of this table are the flattened query symbol (x, x').
    let mut qz = Vec::with_capacity(nx * nv * nz);
    for (x, &px) in data_dist.probs().iter().enumerate() {
        for &pv in view_transform.row(x) {
            qz.extend(encoder.row(x).iter().map(|&pz| px * pv * pz));
        }
    }
    let joint_qz = JointPmf::new(vec![nx * nv, nz], vec!["Q".into(), "Z".into()], qz)?;
    let joint_xz = JointPmf::from_source_and_channel(data_dist, encoder)?;
    Ok(MultiviewInfo {
        i_qz: (mi_nats(joint_qz.table(), nx * nv, nz) / LN_2).max(0.0),
        i_xz: mutual_information(&joint_xz)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_prior_makes_bound_tight() {
        let px = Pmf::new(vec![0.2, 0.5, 0.3]).unwrap();
        let enc = ConditionalPmf::new(vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.3, 0.3, 0.4],
        ])
        .unwrap();
        let prior = enc.push_forward(&px).unwrap();
        let b = complexity_bound_check(&enc, &prior, &px).unwrap();
        assert!(b.marginal_kl.abs() < 1e-15);
        assert!((b.expected_kl - b.mutual_info).abs() < 1e-14);
    }

    #[test]
    fn constant_encoder_has_no_information() {
        let px = Pmf::new(vec![0.2, 0.8]).unwrap();
        let row = Pmf::new(vec![0.6, 0.4]).unwrap();
        let enc = ConditionalPmf::constant(2, &row).unwrap();
        let prior = Pmf::uniform(2).unwrap();
        let b = complexity_bound_check(&enc, &prior, &px).unwrap();
        assert!(b.mutual_info.abs() < 1e-15);
        let direct = crate::measures::kl_divergence(&row, &prior).unwrap();
        assert!((b.expected_kl - direct).abs() < 1e-15);
    }

    #[test]
    fn multiview_extremes() {
        let px = Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let id = ConditionalPmf::identity(4).unwrap();
        let enc = ConditionalPmf::deterministic(4, 2, |x| x / 2).unwrap();
        let m = multiview_query_check(&id, &enc, &px).unwrap();
        let direct = mutual_information(&JointPmf::from_source_and_channel(&px, &enc).unwrap())
            .unwrap();
        assert!((m.i_qz - direct).abs() < 1e-15 && (m.i_xz - direct).abs() < 1e-15);

        let blind = ConditionalPmf::constant(4, &Pmf::uniform(3).unwrap()).unwrap();
        let m = multiview_query_check(&id, &blind, &px).unwrap();
        assert!(m.i_qz.abs() < 1e-15 && m.i_xz.abs() < 1e-15);
    }
}
