//! Expansion of a config into the generation jobs an external text-to-image
//! system has to run. Nothing here generates images.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::EvalConfig;
use crate::rng::NamedStream;

pub const QUERY_PLACEHOLDER: &str = "{q}";
pub const VALUE_PLACEHOLDER: &str = "{a}";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("template {template:?} has no {placeholder} placeholder")]
    MissingPlaceholder {
        template: String,
        placeholder: &'static str,
    },
}

/// Substitutes `{q}` and, when given, `{a}`.
///
/// Without a value, a `{a}` placeholder is dropped together with one
/// adjacent space, so the same template renders both prompt families:
/// `"A {a} {q}."` gives `"A baker."` and `"A Middle Eastern baker."`.
pub fn render_prompt(template: &str, query: &str, value: Option<&str>) -> Result<String, PlanError> {
    if !template.contains(QUERY_PLACEHOLDER) {
        return Err(PlanError::MissingPlaceholder {
            template: template.to_owned(),
            placeholder: QUERY_PLACEHOLDER,
        });
    }
    let with_value = match value {
        Some(v) => {
            if !template.contains(VALUE_PLACEHOLDER) {
                return Err(PlanError::MissingPlaceholder {
                    template: template.to_owned(),
                    placeholder: VALUE_PLACEHOLDER,
                });
            }
            template.replacen(VALUE_PLACEHOLDER, v, 1)
        }
        None => {
            if template.contains("{a} ") {
                template.replacen("{a} ", "", 1)
            } else if template.contains(" {a}") {
                template.replacen(" {a}", "", 1)
            } else {
                template.replacen(VALUE_PLACEHOLDER, "", 1)
            }
        }
    };
    Ok(with_value.replacen(QUERY_PLACEHOLDER, query, 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptJob {
    pub job_id: String,
    pub prompt_text: String,
    pub seed: u64,
    pub images_per_seed: u32,
    pub template_index: usize,
    pub query: String,
    pub conditioned_value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlanSummary {
    pub diversity_jobs: usize,
    pub diversity_images: usize,
    pub conditioned_jobs: usize,
    pub conditioned_images: usize,
}

impl PlanSummary {
    pub fn of(jobs: &[PromptJob]) -> Self {
        let mut s = PlanSummary {
            diversity_jobs: 0,
            diversity_images: 0,
            conditioned_jobs: 0,
            conditioned_images: 0,
        };
        for j in jobs {
            let n = j.images_per_seed as usize;
            if j.conditioned_value.is_some() {
                s.conditioned_jobs += 1;
                s.conditioned_images += n;
            } else {
                s.diversity_jobs += 1;
                s.diversity_images += n;
            }
        }
        s
    }

    pub fn total_jobs(&self) -> usize {
        self.diversity_jobs + self.conditioned_jobs
    }

    pub fn total_images(&self) -> usize {
        self.diversity_images + self.conditioned_images
    }
}

// Seeds stay below 2^32 so they survive JSON consumers that use doubles and
// generators that take 32-bit seeds.
fn distinct_seeds(stream: &NamedStream, n: usize) -> Vec<u64> {
    let mut rng = stream.rng();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = u64::from(rng.random::<u32>());
        if seen.insert(s) {
            out.push(s);
        }
    }
    out
}

/// The full job matrix. Every template/query pair gets the same diversity
/// seed set, and every attribute value gets the same conditioned seed set.
pub fn build_plan(cfg: &EvalConfig) -> Result<Vec<PromptJob>, PlanError> {
    let div_seeds = distinct_seeds(
        &NamedStream::new(cfg.master_seed, "plan/diversity-seeds"),
        cfg.seeds.diversity as usize,
    );
    let cond_seeds = distinct_seeds(
        &NamedStream::new(cfg.master_seed, "plan/conditioned-seeds"),
        cfg.seeds.conditioned as usize,
    );

    let mut jobs = Vec::new();
    for (t, template) in cfg.prompt_templates.iter().enumerate() {
        for (qi, query) in cfg.queries.iter().enumerate() {
            let prompt = render_prompt(template, query, None)?;
            for (si, &seed) in div_seeds.iter().enumerate() {
                jobs.push(PromptJob {
                    job_id: format!("t{t}-q{qi:02}-div-s{si:02}"),
                    prompt_text: prompt.clone(),
                    seed,
                    images_per_seed: cfg.images_per_seed,
                    template_index: t,
                    query: query.clone(),
                    conditioned_value: None,
                });
            }
            for (ai, value) in cfg.attribute.values.iter().enumerate() {
                let prompt = render_prompt(template, query, Some(value))?;
                for (si, &seed) in cond_seeds.iter().enumerate() {
                    jobs.push(PromptJob {
                        job_id: format!("t{t}-q{qi:02}-a{ai:02}-s{si:02}"),
                        prompt_text: prompt.clone(),
                        seed,
                        images_per_seed: cfg.images_per_seed,
                        template_index: t,
                        query: query.clone(),
                        conditioned_value: Some(value.clone()),
                    });
                }
            }
        }
    }
    Ok(jobs)
}

/// One JSON object per line.
pub fn write_plan<W: Write>(jobs: &[PromptJob], mut out: W) -> std::io::Result<()> {
    for j in jobs {
        serde_json::to_writer(&mut out, j)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
