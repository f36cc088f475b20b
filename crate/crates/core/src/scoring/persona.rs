use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{nash, score_age_of, score_gender};
use super::ScoringError;
use crate::config::{AgeDistribution, EvalConfig, FeatureKind, InclusionFeatureSpec};
use crate::ingest::ImageRecord;
use crate::rng::NamedStream;

pub const GENDER_FEATURE: &str = "gender";
pub const AGE_FEATURE: &str = "age";

/// A synthetic user probing whether some image in a set represents them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub age: f64,
    pub gender: String,
}

/// The two features personas are built from, pulled out of a config.
#[derive(Debug, Clone)]
pub struct PersonaFeatures {
    pub genders: Vec<String>,
    pub age_min: f64,
    pub age_max: f64,
}

impl PersonaFeatures {
    pub fn from_config(cfg: &EvalConfig) -> Result<Self, ScoringError> {
        let gender = feature(cfg, GENDER_FEATURE, FeatureKind::CategoricalMatch)?;
        let age = feature(cfg, AGE_FEATURE, FeatureKind::NumericRange)?;
        let [age_min, age_max] = age
            .range
            .ok_or(ScoringError::MissingFeature(AGE_FEATURE))?;
        Ok(Self {
            genders: gender.categories.clone(),
            age_min,
            age_max,
        })
    }

    pub fn age_width(&self) -> f64 {
        self.age_max - self.age_min
    }

    /// Whole-year ages inside the range.
    pub fn integer_ages(&self) -> impl Iterator<Item = f64> + '_ {
        let lo = self.age_min.ceil() as i64;
        let hi = self.age_max.floor() as i64;
        (lo..=hi).map(|a| a as f64)
    }
}

fn feature<'a>(
    cfg: &'a EvalConfig,
    name: &'static str,
    kind: FeatureKind,
) -> Result<&'a InclusionFeatureSpec, ScoringError> {
    cfg.feature(name)
        .filter(|f| f.kind == kind)
        .ok_or(ScoringError::MissingFeature(name))
}

/// Draws `personas.count` personas: gender uniform over the categories, age
/// a whole number of years from the configured age distribution.
pub fn sample_personas(cfg: &EvalConfig, stream: &NamedStream) -> Result<Vec<Persona>, ScoringError> {
    let feats = PersonaFeatures::from_config(cfg)?;
    let lo = feats.age_min.ceil();
    let hi = feats.age_max.floor();
    if lo > hi {
        return Err(ScoringError::MissingFeature(AGE_FEATURE));
    }
    let normal = match cfg.personas.age_distribution {
        AgeDistribution::Uniform => None,
        AgeDistribution::Normal { mean, stddev } => {
            Some(Normal::new(mean, stddev).map_err(|_| ScoringError::MissingFeature(AGE_FEATURE))?)
        }
    };
    let mut rng = stream.rng();
    let personas = (0..cfg.personas.count)
        .map(|_| {
            let gender = feats.genders[rng.random_range(0..feats.genders.len())].clone();
            let age = match &normal {
                None => rng.random_range(lo as i64..=hi as i64) as f64,
                Some(n) => n.sample(&mut rng).round().clamp(lo, hi),
            };
            Persona { age, gender }
        })
        .collect();
    Ok(personas)
}

/// Nash score of one image for one persona; `None` if a feature is unlabeled.
pub fn image_nash(persona: &Persona, img: &ImageRecord, age_width: f64) -> Option<f64> {
    let g = score_gender(persona, img)?;
    let a = score_age_of(persona, img, age_width)?;
    nash(&[g, a]).ok()
}

/// Monte Carlo representativity-attribute score of one image set.
#[derive(Debug, Clone, Copy)]
pub struct RepAttrScorer<'a> {
    pub personas: &'a [Persona],
    pub sample_size: usize,
    pub age_width: f64,
}

impl RepAttrScorer<'_> {
    /// Each persona draws `min(sample_size, |pool|)` images without
    /// replacement (the whole pool when it is no larger than that), keeps its
    /// best Nash score, and the result is the mean of those maxima. Images
    /// with an unlabeled feature are skipped; a persona whose whole sample is
    /// skipped contributes nothing.
    ///
    /// Persona `i` samples from substream `i` of `stream` and the reduction
    /// runs in persona order, so the result does not depend on threading.
    pub fn score(&self, pool: &[&ImageRecord], stream: &NamedStream) -> Result<f64, ScoringError> {
        if pool.is_empty() {
            return Err(ScoringError::NoLabeledData("representativity attributes"));
        }
        let k = self.sample_size.min(pool.len());
        let maxima: Vec<Option<f64>> = self
            .personas
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let best = |idx: &mut dyn Iterator<Item = usize>| {
                    idx.filter_map(|j| image_nash(p, pool[j], self.age_width))
                        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
                };
                if k == pool.len() {
                    best(&mut (0..pool.len()))
                } else {
                    let mut rng = stream.substream(i as u64);
                    best(&mut index::sample(&mut rng, pool.len(), k).into_iter())
                }
            })
            .collect();
        let (sum, n) = maxima
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), m| (s + m, n + 1));
        if n == 0 {
            return Err(ScoringError::NoLabeledData("representativity attributes"));
        }
        Ok(sum / n as f64)
    }
}

pub fn rep_attr_score(
    pool: &[&ImageRecord],
    personas: &[Persona],
    sample_size: usize,
    age_width: f64,
    stream: &NamedStream,
) -> Result<f64, ScoringError> {
    RepAttrScorer {
        personas,
        sample_size,
        age_width,
    }
    .score(pool, stream)
}
