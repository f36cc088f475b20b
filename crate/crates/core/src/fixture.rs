//! Synthetic annotation records for a planned audit. Used by tests, demos and
//! dry runs of the review service; real audits ingest the records produced by
//! an external generator and annotator.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::EvalConfig;
use crate::ingest::{ImageRecord, Label, Layer};
use crate::plan::{build_plan, PlanError};
use crate::rng::NamedStream;
use crate::scoring::{PersonaFeatures, ScoringError};

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Features(#[from] ScoringError),
    #[error("bad fixture weights: {0}")]
    Weights(String),
}

/// How the simulated generator and annotator behave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    /// Race weights for unconditioned images, in attribute order. `None`
    /// means the config's fair distribution.
    pub diversity_weights: Option<Vec<f64>>,
    /// Probability that a conditioned image shows the requested value.
    pub adherence: f64,
    /// Probability that an image's race label is "-".
    pub unlabeled_rate: f64,
    /// Weights over relevance levels 0, 0.5, 1.
    pub relevance_weights: [f64; 3],
    /// Weights over quality levels 1, 2, 3.
    pub quality_weights: [f64; 3],
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            diversity_weights: None,
            adherence: 0.9,
            unlabeled_rate: 0.05,
            relevance_weights: [0.1, 0.3, 0.6],
            quality_weights: [0.2, 0.4, 0.4],
        }
    }
}

fn weighted(w: &[f64]) -> Result<WeightedIndex<f64>, FixtureError> {
    WeightedIndex::new(w).map_err(|e| FixtureError::Weights(e.to_string()))
}

/// One model-layer record per planned image, drawn from stream
/// `fixture/<name>`. Ids are `<job_id>-i<k>`.
pub fn synthetic_records(
    cfg: &EvalConfig,
    profile: &SyntheticProfile,
    name: &str,
) -> Result<Vec<ImageRecord>, FixtureError> {
    let jobs = build_plan(cfg)?;
    let feats = PersonaFeatures::from_config(cfg)?;
    let values = &cfg.attribute.values;
    let div = weighted(
        &profile
            .diversity_weights
            .clone()
            .unwrap_or_else(|| cfg.fair_weights()),
    )?;
    let any_value = weighted(&vec![1.0; values.len()])?;
    let relevance = weighted(&profile.relevance_weights)?;
    let quality = weighted(&profile.quality_weights)?;
    let (lo, hi) = (feats.age_min.ceil() as i64, feats.age_max.floor() as i64);

    let mut rng = NamedStream::new(cfg.master_seed, &format!("fixture/{name}")).rng();
    let mut out = Vec::new();
    for job in &jobs {
        for k in 0..job.images_per_seed {
            let race = match &job.conditioned_value {
                Some(v) if rng.random_bool(profile.adherence) => v.clone(),
                Some(_) => values[any_value.sample(&mut rng)].clone(),
                None => values[div.sample(&mut rng)].clone(),
            };
            let race = if rng.random_bool(profile.unlabeled_rate) {
                Label::Unlabeled
            } else {
                Label::Labeled(race)
            };
            let gender = feats.genders[rng.random_range(0..feats.genders.len())].clone();
            out.push(ImageRecord {
                image_id: format!("{}-i{k}", job.job_id),
                job_id: job.job_id.clone(),
                query: job.query.clone(),
                conditioned_value: job.conditioned_value.clone(),
                seed: job.seed,
                race,
                age: Label::Labeled(rng.random_range(lo..=hi) as f64),
                gender: Label::Labeled(gender),
                relevance: Label::Labeled([0.0, 0.5, 1.0][relevance.sample(&mut rng)]),
                quality: Label::Labeled([1, 2, 3][quality.sample(&mut rng)]),
                caption: None,
                layer: Layer::Model,
            });
        }
    }
    Ok(out)
}
