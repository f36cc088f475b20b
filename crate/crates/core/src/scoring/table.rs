use serde::{Deserialize, Serialize};

use super::features::{inclusion_score, quality_score, relevance_score, QualityScore};
use super::persona::{Persona, PersonaFeatures, RepAttrScorer};
use super::ScoringError;
use crate::config::EvalConfig;
use crate::ingest::{filter_pool, ImageRecord};
use crate::rng::NamedStream;

/// Scores for one (attribute value, query) cell of conditioned images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub value: String,
    pub query: String,
    pub images: usize,
    pub rep_attr: Option<f64>,
    pub relevance: Option<f64>,
    pub inclusion: Option<f64>,
    pub quality_raw: Option<f64>,
    pub quality_norm: Option<f64>,
}

impl CellScores {
    /// True when the cell carries no usable labels at all.
    pub fn is_absent(&self) -> bool {
        self.rep_attr.is_none() && self.relevance.is_none() && self.quality_raw.is_none()
    }
}

/// Per-value means over that value's cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub value: String,
    pub cells: usize,
    pub rep_attr: Option<f64>,
    pub relevance: Option<f64>,
    pub inclusion: Option<f64>,
    pub quality_raw: Option<f64>,
    pub quality_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub cells: Vec<CellScores>,
    pub marginals: Vec<Marginal>,
}

impl ScoreTable {
    pub fn cell(&self, value: &str, query: &str) -> Option<&CellScores> {
        self.cells.iter().find(|c| c.value == value && c.query == query)
    }

    pub fn marginal(&self, value: &str) -> Option<&Marginal> {
        self.marginals.iter().find(|m| m.value == value)
    }

    /// Marginals recomputed from `cells`, in `values` order.
    pub fn from_cells(cells: Vec<CellScores>, values: &[String]) -> Self {
        let marginals = values
            .iter()
            .map(|v| {
                let own: Vec<&CellScores> = cells.iter().filter(|c| &c.value == v).collect();
                let avg = |f: fn(&CellScores) -> Option<f64>| {
                    let xs: Vec<f64> = own.iter().filter_map(|c| f(c)).collect();
                    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
                };
                Marginal {
                    value: v.clone(),
                    cells: own.iter().filter(|c| !c.is_absent()).count(),
                    rep_attr: avg(|c| c.rep_attr),
                    relevance: avg(|c| c.relevance),
                    inclusion: avg(|c| c.inclusion),
                    quality_raw: avg(|c| c.quality_raw),
                    quality_norm: avg(|c| c.quality_norm),
                }
            })
            .collect();
        Self { cells, marginals }
    }
}

/// Stream a cell's persona samples are drawn from. Shared by both layers so
/// model and human scores see the same samples.
pub fn cell_stream(master_seed: u64, value: &str, query: &str) -> NamedStream {
    NamedStream::new(master_seed, &format!("rep-attr/{value}/{query}"))
}

/// Scores every (value, query) cell that has conditioned records.
pub fn build_score_table(
    records: &[ImageRecord],
    cfg: &EvalConfig,
    personas: &[Persona],
) -> Result<ScoreTable, ScoringError> {
    let feats = PersonaFeatures::from_config(cfg)?;
    let scorer = RepAttrScorer {
        personas,
        sample_size: cfg.personas.sample_size,
        age_width: feats.age_width(),
    };
    let mut cells = Vec::new();
    for value in &cfg.attribute.values {
        for query in &cfg.queries {
            let pool = filter_pool(records, query, Some(value));
            if pool.is_empty() {
                continue;
            }
            let rep_attr = scorer
                .score(&pool, &cell_stream(cfg.master_seed, value, query))
                .ok();
            let relevance = relevance_score(pool.iter().copied()).ok();
            let quality = quality_score(pool.iter().copied()).ok();
            let inclusion = match (rep_attr, relevance) {
                (Some(r), Some(l)) => Some(inclusion_score(r, l)),
                _ => None,
            };
            cells.push(CellScores {
                value: value.clone(),
                query: query.clone(),
                images: pool.len(),
                rep_attr,
                relevance,
                inclusion,
                quality_raw: quality.map(|q: QualityScore| q.raw),
                quality_norm: quality.map(|q| q.norm),
            });
        }
    }
    if cells.is_empty() {
        return Err(ScoringError::NoCoveredCells);
    }
    Ok(ScoreTable::from_cells(cells, &cfg.attribute.values))
}
