use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Mean crowd score of one (value, query) cell with its respondent count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdCell {
    pub value: String,
    pub query: String,
    pub mean: f64,
    pub n: usize,
}

/// Plain per-cell means; small `n` is reported, not corrected for.
#[derive(Debug, Default, Clone)]
pub struct CrowdTally {
    sums: BTreeMap<(String, String), (f64, usize)>,
}

impl CrowdTally {
    pub fn add(&mut self, value: &str, query: &str, score: f64) {
        let e = self
            .sums
            .entry((value.to_owned(), query.to_owned()))
            .or_insert((0.0, 0));
        e.0 += score;
        e.1 += 1;
    }

    pub fn cells(&self) -> Vec<CrowdCell> {
        self.sums
            .iter()
            .map(|((value, query), (sum, n))| CrowdCell {
                value: value.clone(),
                query: query.clone(),
                mean: sum / *n as f64,
                n: *n,
            })
            .collect()
    }
}
