//! Inclusion and quality scoring: persona Monte Carlo for representativity
//! attributes, relevance, their midpoint, quality scales, and the crowd
//! questionnaire rules.

mod crowd;
mod features;
mod persona;
mod table;

pub use crowd::{CrowdCell, CrowdTally};
pub use features::{
    crowd_inclusion_score, crowd_quality_score, inclusion_score, nash, neutralize_caption,
    quality_score, relevance_from_confidence, relevance_score, score_age, score_age_of,
    score_gender, CrowdAnswer, QualityScore,
};
pub use persona::{
    image_nash, rep_attr_score, sample_personas, Persona, PersonaFeatures, RepAttrScorer,
    AGE_FEATURE, GENDER_FEATURE,
};
pub use table::{build_score_table, cell_stream, CellScores, Marginal, ScoreTable};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("config lacks a usable {0:?} inclusion feature")]
    MissingFeature(&'static str),
    #[error("no labeled {0} data in pool")]
    NoLabeledData(&'static str),
    #[error("empty score list")]
    EmptyScores,
    #[error("unknown answer {0:?}; expected both, either or none")]
    UnknownAnswer(String),
    #[error("selected {selected} of a set of {set_size}")]
    BadSelection { selected: usize, set_size: usize },
    #[error("records cover no (value, query) cell")]
    NoCoveredCells,
}
