use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, Label, LineError};
use crate::config::AttributeScheme;
use crate::metrics::Distribution;

pub const AGE_BOUNDS: (f64, f64) = (0.0, 120.0);
pub const RELEVANCE_LEVELS: [f64; 3] = [0.0, 0.5, 1.0];
pub const QUALITY_LEVELS: [u8; 3] = [1, 2, 3];

/// Which annotator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    #[default]
    Model,
    Human,
}

impl std::fmt::Display for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Layer::Model => "model",
            Layer::Human => "human",
        })
    }
}

/// One generated image and its annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub job_id: String,
    pub query: String,
    #[serde(default)]
    pub conditioned_value: Option<String>,
    pub seed: u64,
    #[serde(default)]
    pub race: Label<String>,
    #[serde(default)]
    pub age: Label<f64>,
    #[serde(default)]
    pub gender: Label<String>,
    #[serde(default)]
    pub relevance: Label<f64>,
    #[serde(default)]
    pub quality: Label<u8>,
    #[serde(default)]
    pub caption: Option<String>,
    #[serde(default)]
    pub layer: Layer,
}

impl ImageRecord {
    /// Range checks on labeled values.
    pub fn check(&self) -> Result<(), String> {
        if self.image_id.trim().is_empty() {
            return Err("image_id must be non-empty".into());
        }
        if let Some(age) = self.age.value() {
            check_age(age)?;
        }
        if let Some(r) = self.relevance.value() {
            check_relevance(r)?;
        }
        if let Some(q) = self.quality.value() {
            check_quality(q)?;
        }
        Ok(())
    }

    pub fn is_diversity(&self) -> bool {
        self.conditioned_value.is_none()
    }
}

pub(crate) fn check_age(age: f64) -> Result<(), String> {
    if age.is_finite() && (AGE_BOUNDS.0..=AGE_BOUNDS.1).contains(&age) {
        Ok(())
    } else {
        Err(format!(
            "age {age} outside [{}, {}]",
            AGE_BOUNDS.0, AGE_BOUNDS.1
        ))
    }
}

pub(crate) fn check_relevance(r: f64) -> Result<(), String> {
    if RELEVANCE_LEVELS.contains(&r) {
        Ok(())
    } else {
        Err(format!("relevance {r} not in {{0, 0.5, 1}}"))
    }
}

pub(crate) fn check_quality(q: u8) -> Result<(), String> {
    if QUALITY_LEVELS.contains(&q) {
        Ok(())
    } else {
        Err(format!("quality {q} not in {{1, 2, 3}}"))
    }
}

/// Lenient parse result: good records plus every rejected line.
#[derive(Debug, Default)]
pub struct ParsedRecords {
    pub records: Vec<ImageRecord>,
    pub errors: Vec<LineError>,
}

/// Parses line-delimited JSON records. Blank lines are ignored; duplicate
/// image ids are rejected on their second occurrence.
pub fn read_records<R: BufRead>(reader: R) -> Result<ParsedRecords, IngestError> {
    let mut out = ParsedRecords::default();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImageRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(LineError::new(line_no, e.to_string()));
                continue;
            }
        };
        if let Err(msg) = rec.check() {
            out.errors.push(LineError::new(line_no, msg));
            continue;
        }
        if !seen.insert(rec.image_id.clone()) {
            out.errors
                .push(LineError::new(line_no, format!("duplicate image_id {:?}", rec.image_id)));
            continue;
        }
        out.records.push(rec);
    }
    Ok(out)
}

/// Strict parse: any rejected line fails the whole file.
pub fn parse_records(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>, IngestError> {
    let file = super::open(path.as_ref())?;
    let parsed = read_records(BufReader::new(file))?;
    if parsed.errors.is_empty() {
        Ok(parsed.records)
    } else {
        Err(IngestError::Lines(parsed.errors))
    }
}

pub fn write_records<W: Write>(records: &[ImageRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Labeled counts per attribute value plus the number of unlabeled records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub counts: Vec<usize>,
    pub unlabeled: usize,
}

impl LabelCounts {
    pub fn labeled(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn count_labels<'a, I>(records: I, scheme: &AttributeScheme) -> Result<LabelCounts, IngestError>
where
    I: IntoIterator<Item = &'a ImageRecord>,
{
    let mut counts = vec![0usize; scheme.len()];
    let mut unlabeled = 0;
    for r in records {
        match r.race.get() {
            None => unlabeled += 1,
            Some(label) => {
                let idx = scheme.index_of(label).ok_or_else(|| IngestError::UnknownLabel {
                    image_id: r.image_id.clone(),
                    label: label.clone(),
                })?;
                counts[idx] += 1;
            }
        }
    }
    Ok(LabelCounts { counts, unlabeled })
}

/// Observed distribution over the scheme's values; unlabeled records are
/// excluded from numerator and denominator alike.
pub fn distribution_of<'a, I>(records: I, scheme: &AttributeScheme) -> Result<Distribution<f64>, IngestError>
where
    I: IntoIterator<Item = &'a ImageRecord>,
{
    let counts = count_labels(records, scheme)?;
    if counts.labeled() == 0 {
        return Err(IngestError::NoLabeledRecords);
    }
    Ok(Distribution::from_counts(&counts.counts).expect("non-zero total"))
}

/// Records produced for exactly `(query, conditioned_value)`.
pub fn filter_pool<'a>(
    records: &'a [ImageRecord],
    query: &str,
    conditioned_value: Option<&str>,
) -> Vec<&'a ImageRecord> {
    records
        .iter()
        .filter(|r| r.query == query && r.conditioned_value.as_deref() == conditioned_value)
        .collect()
}
