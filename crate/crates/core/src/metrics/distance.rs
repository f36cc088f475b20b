use serde::{Deserialize, Serialize};

use super::{Distribution, MetricError};
use crate::scalar::Scalar;

fn check_dims<T>(p: &Distribution<T>, q: &Distribution<T>) -> Result<(), MetricError>
where
    T: Scalar,
{
    if p.len() != q.len() {
        return Err(MetricError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

/// `D_KL(P || Q)` in nats, with `0 * ln(0 / q) = 0`.
///
/// `Q` must be strictly positive wherever `P` is; a fair distribution always is.
pub fn kl_divergence<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, MetricError> {
    check_dims(p, q)?;
    let mut acc = T::zero();
    for (&pa, &qa) in p.weights().iter().zip(q.weights()) {
        if pa > T::zero() {
            if qa <= T::zero() {
                return Err(MetricError::InvalidDistribution(
                    "reference has zero mass where P is positive".into(),
                ));
            }
            acc = acc + pa * (pa / qa).ln();
        }
    }
    // Rounding can leave a tiny negative sum when P == Q.
    Ok(acc.max(T::zero()))
}

/// Total variation distance `0.5 * sum |P - Q|`.
pub fn tvd<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, MetricError> {
    check_dims(p, q)?;
    let sum = p
        .weights()
        .iter()
        .zip(q.weights())
        .fold(T::zero(), |acc, (&pa, &qa)| acc + (pa - qa).abs());
    Ok((T::half() * sum).min(T::one()))
}

/// How the KL divergence is folded into a `[0, 1]` diversity score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlScoreForm {
    /// `exp(-KL)`: 1 when P == Q.
    #[default]
    Exponential,
    /// `1 - exp(-KL)`: 0 when P == Q. Kept for comparison only.
    Literal,
}

impl KlScoreForm {
    pub fn score<T: Scalar>(self, p: &Distribution<T>, q: &Distribution<T>) -> Result<T, MetricError> {
        match self {
            KlScoreForm::Exponential => diversity_score_kl(p, q),
            KlScoreForm::Literal => diversity_score_kl_literal(p, q),
        }
    }
}

pub fn diversity_score_kl<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, MetricError> {
    Ok((-kl_divergence(p, q)?).exp())
}

pub fn diversity_score_kl_literal<T: Scalar>(
    p: &Distribution<T>,
    q: &Distribution<T>,
) -> Result<T, MetricError> {
    Ok(T::one() - diversity_score_kl(p, q)?)
}

pub fn diversity_score_tvd<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, MetricError> {
    Ok(T::one() - tvd(p, q)?)
}
