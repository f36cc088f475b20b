//! Distribution distances, diversity scores, multi-class statistical parity
//! and rank/linear agreement statistics. All kernels are generic over
//! [`Scalar`](crate::Scalar).

mod correlation;
mod distance;
mod distribution;
mod parity;

pub use correlation::{agreement, fractional_ranks, pearson, spearman, AgreementResult};
pub use distance::{
    diversity_score_kl, diversity_score_kl_literal, diversity_score_tvd, kl_divergence, tvd,
    KlScoreForm,
};
pub use distribution::Distribution;
pub use parity::{parity_check, parity_check_weighted, ParityEntry, ParityResult};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("correlation undefined for a constant series")]
    ConstantSeries,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty score map")]
    EmptyScores,
    #[error("score for {label:?} outside [0, 1]: {score}")]
    ScoreOutOfRange { label: String, score: f64 },
}
