//! Records in, verdict out. Shared by the CLI and the review service so both
//! produce identical reports from identical inputs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::{EvalConfig, FairDistribution};
use crate::decision::{decide, AuditReport, DecideOptions, DecisionError};
use crate::diversity::{score_diversity, DiversityMetric, DiversityScores};
use crate::ingest::{
    merge_layers, ConfidenceRecord, CorrectionEvent, ImageRecord, IngestError, Label, Layer,
    SkippedCorrection,
};
use crate::manifest::RunManifest;
use crate::metrics::KlScoreForm;
use crate::rng::NamedStream;
use crate::scoring::{
    build_score_table, relevance_from_confidence, sample_personas, Persona, ScoreTable,
    ScoringError,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error("layer {0} was not scored")]
    MissingLayer(Layer),
}

/// Everything scored from one annotation layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub layer: Layer,
    /// Absent when no unconditioned record carries a label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diversity: Option<DiversityScores>,
    pub table: ScoreTable,
}

/// The persisted output of a scoring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDocument {
    pub manifest: RunManifest,
    pub model: LayerScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<LayerScores>,
    #[serde(default)]
    pub skipped_corrections: Vec<SkippedCorrection>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ScoreDocument {
    pub fn layer(&self, layer: Layer) -> Option<&LayerScores> {
        match layer {
            Layer::Model => Some(&self.model),
            Layer::Human => self.human.as_ref(),
        }
    }

    /// Human when a correction log was supplied, model otherwise.
    pub fn default_layer(&self) -> Layer {
        if self.human.is_some() {
            Layer::Human
        } else {
            Layer::Model
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreOptions {
    pub kl_form: KlScoreForm,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreInputs<'a> {
    pub records: &'a [ImageRecord],
    /// `Some` (even empty) produces a human layer.
    pub corrections: Option<&'a [CorrectionEvent]>,
    /// Relevance confidences that replace the model layer's relevance.
    pub confidences: Option<&'a [ConfidenceRecord]>,
}

#[derive(Debug, Clone)]
pub struct ScoredLayers {
    pub model: LayerScores,
    pub human: Option<LayerScores>,
    pub skipped_corrections: Vec<SkippedCorrection>,
    pub warnings: Vec<String>,
}

impl ScoredLayers {
    pub fn into_document(self, manifest: RunManifest) -> ScoreDocument {
        ScoreDocument {
            manifest,
            model: self.model,
            human: self.human,
            skipped_corrections: self.skipped_corrections,
            warnings: self.warnings,
        }
    }
}

pub fn personas_for(cfg: &EvalConfig) -> Result<Vec<Persona>, ScoringError> {
    sample_personas(cfg, &NamedStream::new(cfg.master_seed, "personas"))
}

fn score_layer(
    layer: Layer,
    records: &[ImageRecord],
    cfg: &EvalConfig,
    personas: &[Persona],
    opts: ScoreOptions,
    warnings: &mut Vec<String>,
) -> Result<LayerScores, PipelineError> {
    let diversity = match score_diversity(records, cfg, opts.kl_form) {
        Ok(d) => Some(d),
        Err(IngestError::NoLabeledRecords) => {
            warnings.push(format!(
                "{layer} layer: no labeled unconditioned records, diversity not scored"
            ));
            None
        }
        Err(e) => return Err(e.into()),
    };
    Ok(LayerScores {
        layer,
        diversity,
        table: build_score_table(records, cfg, personas)?,
    })
}

fn design_warnings(records: &[ImageRecord], cfg: &EvalConfig) -> Vec<String> {
    let outside = records
        .iter()
        .filter(|r| {
            !cfg.queries.contains(&r.query)
                || r.conditioned_value
                    .as_ref()
                    .is_some_and(|v| cfg.attribute.index_of(v).is_none())
        })
        .count();
    if outside == 0 {
        vec![]
    } else {
        vec![format!(
            "{outside} record(s) outside the configured queries/values were ignored"
        )]
    }
}

/// Scores the model layer and, when a correction log is given, the human
/// layer. Both layers use the same personas and persona samples.
pub fn score_layers(
    cfg: &EvalConfig,
    inputs: ScoreInputs<'_>,
    opts: ScoreOptions,
) -> Result<ScoredLayers, PipelineError> {
    let mut warnings = design_warnings(inputs.records, cfg);
    let personas = personas_for(cfg)?;

    let model_records: Vec<ImageRecord> = match inputs.confidences {
        None => inputs.records.to_vec(),
        Some(conf) => {
            let by_id: HashMap<&str, f64> =
                conf.iter().map(|c| (c.image_id.as_str(), c.confidence)).collect();
            let known = inputs
                .records
                .iter()
                .filter(|r| by_id.contains_key(r.image_id.as_str()))
                .count();
            if known < by_id.len() {
                warnings.push(format!(
                    "{} confidence record(s) reference unknown images",
                    by_id.len() - known
                ));
            }
            inputs
                .records
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    if let Some(&c) = by_id.get(r.image_id.as_str()) {
                        r.relevance = Label::Labeled(relevance_from_confidence(c));
                    }
                    r
                })
                .collect()
        }
    };
    let model = score_layer(Layer::Model, &model_records, cfg, &personas, opts, &mut warnings)?;

    let (human, skipped_corrections) = match inputs.corrections {
        None => (None, Vec::new()),
        Some(log) => {
            let merged = merge_layers(inputs.records, log);
            let human = score_layer(
                Layer::Human,
                &merged.records,
                cfg,
                &personas,
                opts,
                &mut warnings,
            )?;
            (Some(human), merged.skipped)
        }
    };
    if !skipped_corrections.is_empty() {
        warnings.push(format!(
            "{} correction(s) skipped",
            skipped_corrections.len()
        ));
    }
    Ok(ScoredLayers {
        model,
        human,
        skipped_corrections,
        warnings,
    })
}

/// Applies the gates to one scored layer.
pub fn decide_layer(
    cfg: &EvalConfig,
    scores: &LayerScores,
    metric: DiversityMetric,
) -> Result<AuditReport, DecisionError> {
    let parity_weights = match cfg.fair_distribution {
        FairDistribution::Uniform => None,
        FairDistribution::Explicit { .. } => Some(cfg.fair_weights()),
    };
    let diversity = scores
        .diversity
        .as_ref()
        .ok_or(DecisionError::NoDiversity(scores.layer))?;
    decide(
        diversity,
        &scores.table,
        &cfg.attribute.values,
        &cfg.thresholds,
        &DecideOptions {
            metric,
            parity_weights,
            layer: scores.layer,
            config_fingerprint: cfg.fingerprint(),
        },
    )
}
