//! Diversity of the unconditioned generations against the fair distribution.

use serde::{Deserialize, Serialize};

use crate::config::EvalConfig;
use crate::ingest::{count_labels, ImageRecord, IngestError};
use crate::metrics::{diversity_score_tvd, kl_divergence, tvd, Distribution, KlScoreForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiversityMetric {
    #[default]
    Kl,
    Tvd,
}

impl std::fmt::Display for DiversityMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DiversityMetric::Kl => "kl",
            DiversityMetric::Tvd => "tvd",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityEntry {
    /// `None` for the pooled entry over all queries.
    pub query: Option<String>,
    pub labeled: usize,
    pub unlabeled: usize,
    pub distribution: Vec<f64>,
    pub kl: f64,
    pub tvd: f64,
    pub score_kl: f64,
    pub score_tvd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityScores {
    pub kl_form: KlScoreForm,
    pub overall: DiversityEntry,
    pub per_query: Vec<DiversityEntry>,
}

impl DiversityScores {
    pub fn score(&self, metric: DiversityMetric) -> f64 {
        match metric {
            DiversityMetric::Kl => self.overall.score_kl,
            DiversityMetric::Tvd => self.overall.score_tvd,
        }
    }
}

fn entry<'a>(
    query: Option<&str>,
    records: impl IntoIterator<Item = &'a ImageRecord>,
    cfg: &EvalConfig,
    fair: &Distribution<f64>,
    form: KlScoreForm,
) -> Result<DiversityEntry, IngestError> {
    let counts = count_labels(records, &cfg.attribute)?;
    if counts.labeled() == 0 {
        return Err(IngestError::NoLabeledRecords);
    }
    let p = Distribution::from_counts(&counts.counts).expect("non-zero total");
    let metric = |r: Result<f64, _>| r.expect("dimensions match the scheme");
    Ok(DiversityEntry {
        query: query.map(str::to_owned),
        labeled: counts.labeled(),
        unlabeled: counts.unlabeled,
        kl: metric(kl_divergence(&p, fair)),
        tvd: metric(tvd(&p, fair)),
        score_kl: metric(form.score(&p, fair)),
        score_tvd: metric(diversity_score_tvd(&p, fair)),
        distribution: p.weights().to_vec(),
    })
}

/// Pooled and per-query diversity of the unconditioned records. Queries
/// without a labeled record are left out of `per_query`.
pub fn score_diversity(
    records: &[ImageRecord],
    cfg: &EvalConfig,
    form: KlScoreForm,
) -> Result<DiversityScores, IngestError> {
    let fair = Distribution::new(cfg.fair_weights()).expect("validated fair distribution");
    let unconditioned: Vec<&ImageRecord> = records.iter().filter(|r| r.is_diversity()).collect();
    let overall = entry(None, unconditioned.iter().copied(), cfg, &fair, form)?;
    let mut per_query = Vec::new();
    for q in &cfg.queries {
        match entry(
            Some(q),
            unconditioned.iter().copied().filter(|r| &r.query == q),
            cfg,
            &fair,
            form,
        ) {
            Ok(e) => per_query.push(e),
            Err(IngestError::NoLabeledRecords) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(DiversityScores {
        kl_form: form,
        overall,
        per_query,
    })
}
