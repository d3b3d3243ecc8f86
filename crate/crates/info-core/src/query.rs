//! Queries and the goodness of an abstraction.
//!
//! A query is represented extensionally: a table of answer distributions, one
//! row per data symbol. An abstraction is judged through its reconstruction
//! map `p(r | x)` over the same alphabet as the data: the loss is the expected
//! divergence between the query's answer on the data and on the reconstruction.

use crate::dist::{check_len, ConditionalPmf, Pmf, MASS_TOLERANCE};
use crate::error::{InfoError, Result};
use crate::measures::{kl_divergence, total_variation};

/// Divergence used to compare two query answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Divergence {
    /// Kullback-Leibler, in bits.
    #[default]
    Kl,
    TotalVariation,
}

impl Divergence {
    pub fn between(self, p: &Pmf, q: &Pmf) -> Result<f64> {
        match self {
            Divergence::Kl => kl_divergence(p, q),
            Divergence::TotalVariation => total_variation(p, q),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    /// Rows are data symbols, columns are query answers.
    pub answer_given_data: ConditionalPmf,
    pub prior_weight: f64,
}

impl QuerySpec {
    pub fn new(answer_given_data: ConditionalPmf, prior_weight: f64) -> Self {
        Self {
            answer_given_data,
            prior_weight,
        }
    }

    /// The query answer distribution for data symbol `x`.
    pub fn answer(&self, x: usize) -> Pmf {
        self.answer_given_data.row_pmf(x)
    }
}

/// `E_{x ~ p(x)} E_{r ~ p(r|x)} D[Q(x) ‖ Q(r)]`.
pub fn abstraction_goodness(
    query: &QuerySpec,
    data_dist: &Pmf,
    recon_given_data: &ConditionalPmf,
    divergence: Divergence,
) -> Result<f64> {
    let n = data_dist.len();
    check_len(query.answer_given_data.rows(), n, "query rows")?;
    check_len(recon_given_data.rows(), n, "reconstruction rows")?;
    check_len(recon_given_data.cols(), n, "reconstruction alphabet")?;
    let mut loss = 0.0;
    for (x, &px) in data_dist.probs().iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let truth = query.answer(x);
        for (r, &pr) in recon_given_data.row(x).iter().enumerate() {
            if pr == 0.0 {
                continue;
            }
            loss += px * pr * divergence.between(&truth, &query.answer(r))?;
        }
    }
    Ok(loss.max(0.0))
}

/// `Σ_i p(Q_i) 𝓛_{Q_i}`; the prior weights must sum to one.
pub fn weighted_goodness(
    queries: &[QuerySpec],
    data_dist: &Pmf,
    recon_given_data: &ConditionalPmf,
    divergence: Divergence,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(InfoError::Empty);
    }
    let sum: f64 = queries.iter().map(|q| q.prior_weight).sum();
    if (sum - 1.0).abs() > MASS_TOLERANCE || queries.iter().any(|q| q.prior_weight < 0.0) {
        return Err(InfoError::WeightSum { sum });
    }
    queries.iter().try_fold(0.0, |acc, q| {
        Ok(acc + q.prior_weight * abstraction_goodness(q, data_dist, recon_given_data, divergence)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parity_query(n: usize) -> QuerySpec {
        QuerySpec::new(ConditionalPmf::deterministic(n, 2, |x| x % 2).unwrap(), 1.0)
    }

    #[test]
    fn identity_reconstruction_is_perfect() {
        let px = Pmf::uniform(4).unwrap();
        let id = ConditionalPmf::identity(4).unwrap();
        for div in [Divergence::Kl, Divergence::TotalVariation] {
            assert_eq!(abstraction_goodness(&parity_query(4), &px, &id, div).unwrap(), 0.0);
        }
    }

    #[test]
    fn collapsed_reconstruction_is_penalized() {
        let px = Pmf::uniform(4).unwrap();
        let collapse = ConditionalPmf::deterministic(4, 4, |_| 0).unwrap();
        // Half the symbols get the wrong parity: TV loss = 0.5.
        let tv = abstraction_goodness(&parity_query(4), &px, &collapse, Divergence::TotalVariation)
            .unwrap();
        assert!((tv - 0.5).abs() < 1e-15);
        // Deterministic answers that disagree have infinite KL.
        assert!(matches!(
            abstraction_goodness(&parity_query(4), &px, &collapse, Divergence::Kl),
            Err(InfoError::AbsoluteContinuity { .. })
        ));
        let soft = QuerySpec::new(
            ConditionalPmf::new(vec![
                vec![0.8, 0.2],
                vec![0.3, 0.7],
                vec![0.8, 0.2],
                vec![0.3, 0.7],
            ])
            .unwrap(),
            1.0,
        );
        assert!(abstraction_goodness(&soft, &px, &collapse, Divergence::Kl).unwrap() > 0.0);
    }

    #[test]
    fn constant_query_ignores_reconstruction() {
        let px = Pmf::new(vec![0.1, 0.2, 0.7]).unwrap();
        let q = QuerySpec::new(
            ConditionalPmf::constant(3, &Pmf::new(vec![0.4, 0.6]).unwrap()).unwrap(),
            1.0,
        );
        let collapse = ConditionalPmf::deterministic(3, 3, |_| 2).unwrap();
        assert_eq!(abstraction_goodness(&q, &px, &collapse, Divergence::Kl).unwrap(), 0.0);
    }

    #[test]
    fn alphabet_mismatch() {
        let px = Pmf::uniform(4).unwrap();
        let recon = ConditionalPmf::identity(3).unwrap();
        assert!(matches!(
            abstraction_goodness(&parity_query(4), &px, &recon, Divergence::Kl),
            Err(InfoError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let px = Pmf::uniform(4).unwrap();
        let id = ConditionalPmf::identity(4).unwrap();
        let mut a = parity_query(4);
        a.prior_weight = 0.6;
        let b = a.clone();
        assert!(matches!(
            weighted_goodness(&[a, b], &px, &id, Divergence::Kl),
            Err(InfoError::WeightSum { .. })
        ));
    }
}
