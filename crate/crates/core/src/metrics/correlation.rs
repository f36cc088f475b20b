use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::scalar::Scalar;

/// Linear and rank agreement between two paired series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult<T> {
    pub pearson: T,
    pub spearman: T,
    pub n: usize,
}

fn check_pair<T>(x: &[T], y: &[T]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricError::TooFewSamples {
            needed: 2,
            got: x.len(),
        });
    }
    Ok(())
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(xs.len())
}

/// Sample Pearson product-moment correlation.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(MetricError::ConstantSeries);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn fractional_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold rank (i+1 + j) / 2
        let avg = T::from_usize_lossy(i + 1 + j) * T::half();
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman's rho as the Pearson correlation of fractional ranks.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

pub fn agreement<T: Scalar>(x: &[T], y: &[T]) -> Result<AgreementResult<T>, MetricError> {
    Ok(AgreementResult {
        pearson: pearson(x, y)?,
        spearman: spearman(x, y)?,
        n: x.len(),
    })
}
