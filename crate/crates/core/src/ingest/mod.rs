//! Annotation records, the human correction layer, and the observed
//! distributions built from them.

mod corrections;
mod label;
mod records;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use corrections::{
    merge_layers, parse_corrections, read_corrections, write_corrections, CorrectionEvent,
    CorrectionField, MergeOutcome, SkippedCorrection,
};
pub use label::{FieldValue, Label, LabelValue, UNLABELED};
pub use records::{
    count_labels, distribution_of, filter_pool, parse_records, read_records, write_records,
    ImageRecord, LabelCounts, Layer, ParsedRecords, AGE_BOUNDS, QUALITY_LEVELS, RELEVANCE_LEVELS,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl LineError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{} bad line(s): {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Lines(Vec<LineError>),
    #[error("image {image_id}: label {label:?} is not an attribute value")]
    UnknownLabel { image_id: String, label: String },
    #[error("no labeled records in pool")]
    NoLabeledRecords,
}

pub(crate) fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Open {
        path: path.display().to_string(),
        source,
    })
}

/// Output of an external caption + zero-shot classification pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub image_id: String,
    pub confidence: f64,
}

pub fn read_confidences<R: BufRead>(reader: R) -> Result<Vec<ConfidenceRecord>, IngestError> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ConfidenceRecord>(&line) {
            Ok(c) if (0.0..=1.0).contains(&c.confidence) => out.push(c),
            Ok(c) => errors.push(LineError::new(
                i + 1,
                format!("confidence {} outside [0, 1]", c.confidence),
            )),
            Err(e) => errors.push(LineError::new(i + 1, e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Lines(errors))
    }
}

pub fn parse_confidences(path: impl AsRef<Path>) -> Result<Vec<ConfidenceRecord>, IngestError> {
    read_confidences(BufReader::new(open(path.as_ref())?))
}
