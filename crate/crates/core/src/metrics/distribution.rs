use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::scalar::Scalar;

/// Probability vector over the attribute values, in scheme order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution<T> {
    weights: Vec<T>,
}

fn sum_tolerance<T: Scalar>(n: usize) -> T {
    let tol = T::from_f64_lossy(crate::config::WEIGHT_SUM_TOLERANCE);
    let eps = T::epsilon() * T::from_usize_lossy(4 * n.max(1));
    tol.max(eps)
}

impl<T: Scalar> Distribution<T> {
    /// Checks non-negativity and that the weights sum to one.
    pub fn new(weights: Vec<T>) -> Result<Self, MetricError> {
        if weights.is_empty() {
            return Err(MetricError::InvalidDistribution("no values".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= T::zero())) {
            return Err(MetricError::InvalidDistribution(format!(
                "weight {w:?} is negative or not finite"
            )));
        }
        let sum = weights.iter().fold(T::zero(), |acc, &w| acc + w);
        if (sum - T::one()).abs() > sum_tolerance::<T>(weights.len()) {
            return Err(MetricError::InvalidDistribution(format!(
                "weights sum to {sum:?}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over zero values");
        let w = T::one() / T::from_usize_lossy(n);
        Self { weights: vec![w; n] }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        assert!(at < n, "point mass index {at} out of {n}");
        let mut weights = vec![T::zero(); n];
        weights[at] = T::one();
        Self { weights }
    }

    /// Relative frequencies; errors when every count is zero.
    pub fn from_counts(counts: &[usize]) -> Result<Self, MetricError> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(MetricError::InvalidDistribution("all counts are zero".into()));
        }
        let denom = T::from_usize_lossy(total);
        Ok(Self {
            weights: counts
                .iter()
                .map(|&c| T::from_usize_lossy(c) / denom)
                .collect(),
        })
    }

    /// `(1 - t) * self + t * other`.
    pub fn mix(&self, other: &Self, t: T) -> Result<Self, MetricError> {
        if self.len() != other.len() {
            return Err(MetricError::DimensionMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(&p, &q)| (T::one() - t) * p + t * q)
            .collect();
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
