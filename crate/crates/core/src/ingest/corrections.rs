use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::records::{check_age, check_quality, check_relevance};
use super::{FieldValue, ImageRecord, IngestError, Label, Layer, LineError};
use crate::config::EvalConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionField {
    Race,
    Age,
    Gender,
    Relevance,
    Quality,
}

impl fmt::Display for CorrectionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrectionField::Race => "race",
            CorrectionField::Age => "age",
            CorrectionField::Gender => "gender",
            CorrectionField::Relevance => "relevance",
            CorrectionField::Quality => "quality",
        })
    }
}

/// A reviewer's change to one annotation field. The log of these events is
/// append-only; replaying it in order yields the human layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    /// Client-generated id; resubmissions with a known id are no-ops.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
    pub reviewer_id: String,
    pub image_id: String,
    pub field: CorrectionField,
    pub old_value: FieldValue,
    pub new_value: FieldValue,
    pub timestamp: DateTime<Utc>,
}

impl CorrectionEvent {
    /// Checks `new_value` against the field's domain. Categorical values are
    /// checked against the config when one is given.
    pub fn check(&self, cfg: Option<&EvalConfig>) -> Result<(), String> {
        if self.reviewer_id.trim().is_empty() {
            return Err("reviewer_id must be non-empty".into());
        }
        let v = &self.new_value;
        match (self.field, v) {
            (_, FieldValue::Unlabeled) => Ok(()),
            (CorrectionField::Race, FieldValue::Text(t)) => match cfg {
                Some(c) if c.attribute.index_of(t).is_none() => {
                    Err(format!("{t:?} is not a value of {}", c.attribute.name))
                }
                _ => Ok(()),
            },
            (CorrectionField::Gender, FieldValue::Text(t)) => {
                match cfg.and_then(|c| c.feature("gender")) {
                    Some(f) if !f.categories.iter().any(|c| c == t) => {
                        Err(format!("{t:?} is not a gender category"))
                    }
                    _ => Ok(()),
                }
            }
            (CorrectionField::Age, FieldValue::Number(n)) => check_age(*n),
            (CorrectionField::Relevance, FieldValue::Number(n)) => check_relevance(*n),
            (CorrectionField::Quality, FieldValue::Number(n)) => {
                if n.fract() == 0.0 && (0.0..=255.0).contains(n) {
                    check_quality(*n as u8)
                } else {
                    Err(format!("quality {n} not in {{1, 2, 3}}"))
                }
            }
            (field, other) => Err(format!("{other:?} is not a valid {field} value")),
        }
    }

    fn apply(&self, rec: &mut ImageRecord) -> Result<(), String> {
        self.check(None)?;
        let v = &self.new_value;
        match self.field {
            CorrectionField::Race => rec.race = text_label(v),
            CorrectionField::Gender => rec.gender = text_label(v),
            CorrectionField::Age => rec.age = number_label(v),
            CorrectionField::Relevance => rec.relevance = number_label(v),
            CorrectionField::Quality => rec.quality = number_label(v).get().map(|q| *q as u8).into(),
        }
        rec.layer = Layer::Human;
        Ok(())
    }
}

fn text_label(v: &FieldValue) -> Label<String> {
    match v {
        FieldValue::Text(t) => Label::Labeled(t.clone()),
        _ => Label::Unlabeled,
    }
}

fn number_label(v: &FieldValue) -> Label<f64> {
    match v {
        FieldValue::Number(n) => Label::Labeled(*n),
        _ => Label::Unlabeled,
    }
}

/// An event that could not be applied, with its position in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCorrection {
    pub index: usize,
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub records: Vec<ImageRecord>,
    pub skipped: Vec<SkippedCorrection>,
}

/// Replays `corrections` over `model` in order; the last event per
/// (image, field) wins. Corrected records are marked as human layer.
/// Events for unknown images are reported and skipped.
pub fn merge_layers(model: &[ImageRecord], corrections: &[CorrectionEvent]) -> MergeOutcome {
    let mut records = model.to_vec();
    let index: HashMap<&str, usize> = model
        .iter()
        .enumerate()
        .map(|(i, r)| (r.image_id.as_str(), i))
        .collect();
    let mut skipped = Vec::new();
    for (i, ev) in corrections.iter().enumerate() {
        let Some(&at) = index.get(ev.image_id.as_str()) else {
            skipped.push(SkippedCorrection {
                index: i,
                image_id: ev.image_id.clone(),
                reason: "unknown image_id".into(),
            });
            continue;
        };
        if let Err(reason) = ev.apply(&mut records[at]) {
            skipped.push(SkippedCorrection {
                index: i,
                image_id: ev.image_id.clone(),
                reason,
            });
        }
    }
    MergeOutcome { records, skipped }
}

/// Parses a line-delimited correction log. Lines carrying a `type` tag other
/// than `"correction"` are skipped, so the review service's combined log can
/// be read directly.
pub fn read_corrections<R: BufRead>(reader: R) -> Result<Vec<CorrectionEvent>, IngestError> {
    let mut events = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                errors.push(LineError::new(i + 1, e.to_string()));
                continue;
            }
        };
        match value.get("type").and_then(|t| t.as_str()) {
            None | Some("correction") => {}
            Some(_) => continue,
        }
        match serde_json::from_value(value) {
            Ok(ev) => events.push(ev),
            Err(e) => errors.push(LineError::new(i + 1, e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(events)
    } else {
        Err(IngestError::Lines(errors))
    }
}

pub fn parse_corrections(path: impl AsRef<Path>) -> Result<Vec<CorrectionEvent>, IngestError> {
    let file = super::open(path.as_ref())?;
    read_corrections(BufReader::new(file))
}

pub fn write_corrections<W: Write>(events: &[CorrectionEvent], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
