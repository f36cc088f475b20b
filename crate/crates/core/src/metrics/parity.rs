use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityEntry<T> {
    pub value: String,
    pub score: T,
    pub deviation: T,
}

/// Outcome of the multi-class statistical parity check: every value's score
/// must lie within `epsilon` of the expectation over values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityResult<T> {
    pub entries: Vec<ParityEntry<T>>,
    pub expectation: T,
    pub epsilon: T,
    pub failing_values: Vec<String>,
}

impl<T: Scalar> ParityResult<T> {
    pub fn passed(&self) -> bool {
        self.failing_values.is_empty()
    }

    pub fn score_of(&self, value: &str) -> Option<T> {
        self.entries.iter().find(|e| e.value == value).map(|e| e.score)
    }

    pub fn deviation_of(&self, value: &str) -> Option<T> {
        self.entries.iter().find(|e| e.value == value).map(|e| e.deviation)
    }
}

fn validate<T: Scalar, S: AsRef<str>>(scores: &[(S, T)]) -> Result<(), MetricError> {
    if scores.is_empty() {
        return Err(MetricError::EmptyScores);
    }
    for (label, s) in scores {
        if !(*s >= T::zero() && *s <= T::one()) {
            return Err(MetricError::ScoreOutOfRange {
                label: label.as_ref().to_owned(),
                score: s.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(())
}

fn finish<T: Scalar, S: AsRef<str>>(scores: &[(S, T)], expectation: T, epsilon: T) -> ParityResult<T> {
    let entries: Vec<_> = scores
        .iter()
        .map(|(label, s)| ParityEntry {
            value: label.as_ref().to_owned(),
            score: *s,
            deviation: (*s - expectation).abs(),
        })
        .collect();
    let failing_values = entries
        .iter()
        .filter(|e| e.deviation > epsilon)
        .map(|e| e.value.clone())
        .collect();
    ParityResult {
        entries,
        expectation,
        epsilon,
        failing_values,
    }
}

// Mean taken relative to the first score, so equal scores give an exactly
// equal expectation and zero deviations.
fn shifted_mean<T: Scalar, S>(scores: &[(S, T)], weight: impl Fn(usize) -> T, total: T) -> T {
    let origin = scores[0].1;
    let shift = scores
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, (_, s))| acc + weight(i) * (*s - origin));
    origin + shift / total
}

/// Parity against the unweighted mean of the scores.
pub fn parity_check<T: Scalar, S: AsRef<str>>(
    scores: &[(S, T)],
    epsilon: T,
) -> Result<ParityResult<T>, MetricError> {
    validate(scores)?;
    let n = T::from_usize_lossy(scores.len());
    Ok(finish(scores, shifted_mean(scores, |_| T::one(), n), epsilon))
}

/// Parity against a weighted expectation; `weights` are renormalized over
/// the values present.
pub fn parity_check_weighted<T: Scalar, S: AsRef<str>>(
    scores: &[(S, T)],
    weights: &[T],
    epsilon: T,
) -> Result<ParityResult<T>, MetricError> {
    validate(scores)?;
    if weights.len() != scores.len() {
        return Err(MetricError::DimensionMismatch {
            left: scores.len(),
            right: weights.len(),
        });
    }
    let total = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    // written negated so a NaN total is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(total > T::zero()) || weights.iter().any(|w| *w < T::zero()) {
        return Err(MetricError::InvalidDistribution(
            "parity weights must be non-negative with positive sum".into(),
        ));
    }
    Ok(finish(scores, shifted_mean(scores, |i| weights[i], total), epsilon))
}
