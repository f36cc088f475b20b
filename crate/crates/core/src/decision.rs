//! The three-stage verdict: diversity gate, per-value inclusion gate, then
//! multi-class statistical parity of inclusion and quality.
//!
//! Every stage is always evaluated. Once a stage fails, the stages after it
//! are kept in the report but marked informational.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::Thresholds;
use crate::diversity::{DiversityMetric, DiversityScores};
use crate::ingest::Layer;
use crate::metrics::{parity_check, parity_check_weighted, MetricError, ParityResult};
use crate::scoring::{CellScores, ScoreTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecisionError {
    #[error("no {metric} marginal for attribute value {value:?}")]
    MissingMarginal { value: String, metric: &'static str },
    #[error("parity check failed: {0}")]
    Parity(#[from] MetricError),
    #[error("{0} layer has no diversity scores (no labeled unconditioned records)")]
    NoDiversity(Layer),
    #[error("malformed report: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    RepresentativityFair,
    RepresentativityBias,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::RepresentativityFair => "representativity-fair",
            Verdict::RepresentativityBias => "representativity-bias",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityGate {
    pub metric_used: DiversityMetric,
    pub score_kl: f64,
    pub score_tvd: f64,
    pub threshold: f64,
    pub passed: bool,
    pub scores: DiversityScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionGateEntry {
    pub value: String,
    pub score: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionGate {
    pub threshold: f64,
    pub values: Vec<InclusionGateEntry>,
    pub passed: bool,
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityGate {
    pub result: ParityResult<f64>,
    pub passed: bool,
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config_fingerprint: String,
    /// Annotation layer every score in this report was computed from.
    pub layer: Layer,
    pub diversity: DiversityGate,
    pub inclusion_gate: InclusionGate,
    pub inclusion_parity: ParityGate,
    pub quality_parity: ParityGate,
    pub cells: Vec<CellScores>,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct DecideOptions {
    pub metric: DiversityMetric,
    /// Explicit fair weights reweight the parity expectation; `None` means
    /// the unweighted mean.
    pub parity_weights: Option<Vec<f64>>,
    pub layer: Layer,
    pub config_fingerprint: String,
}

fn marginal_scores(
    table: &ScoreTable,
    values: &[String],
    metric: &'static str,
    pick: fn(&crate::scoring::Marginal) -> Option<f64>,
) -> Result<Vec<(String, f64)>, DecisionError> {
    values
        .iter()
        .map(|v| {
            table
                .marginal(v)
                .and_then(pick)
                .map(|s| (v.clone(), s))
                .ok_or_else(|| DecisionError::MissingMarginal {
                    value: v.clone(),
                    metric,
                })
        })
        .collect()
}

fn parity(
    scores: &[(String, f64)],
    epsilon: f64,
    weights: Option<&[f64]>,
) -> Result<ParityResult<f64>, DecisionError> {
    Ok(match weights {
        Some(w) => parity_check_weighted(scores, w, epsilon)?,
        None => parity_check(scores, epsilon)?,
    })
}

/// Runs all gates over the table's marginals for `values` (the configured
/// attribute values, in order).
pub fn decide(
    diversity: &DiversityScores,
    table: &ScoreTable,
    values: &[String],
    thresholds: &Thresholds,
    opts: &DecideOptions,
) -> Result<AuditReport, DecisionError> {
    let mut reasons = Vec::new();
    let tag = |informational: bool| if informational { "[informational] " } else { "" };

    let chosen = diversity.score(opts.metric);
    let div_passed = chosen >= thresholds.diversity_min;
    if !div_passed {
        reasons.push(format!(
            "diversity score {chosen:.3} ({}) is below the threshold {:.2}",
            opts.metric, thresholds.diversity_min
        ));
    }

    let inclusion = marginal_scores(table, values, "inclusion", |m| m.inclusion)?;
    let quality = marginal_scores(table, values, "quality", |m| m.quality_norm)?;

    let inc_informational = !div_passed;
    let entries: Vec<InclusionGateEntry> = inclusion
        .iter()
        .map(|(v, s)| InclusionGateEntry {
            value: v.clone(),
            score: *s,
            passed: *s > thresholds.inclusion_min,
        })
        .collect();
    let inc_passed = entries.iter().all(|e| e.passed);
    for e in entries.iter().filter(|e| !e.passed) {
        reasons.push(format!(
            "{}inclusion score for {} ({:.3}) does not exceed {:.2}",
            tag(inc_informational),
            e.value,
            e.score,
            thresholds.inclusion_min
        ));
    }

    let parity_informational = inc_informational || !inc_passed;
    let weights = opts.parity_weights.as_deref();
    let eps = thresholds.parity_epsilon;
    let mut parity_gate = |name: &str, scores: &[(String, f64)]| -> Result<ParityGate, DecisionError> {
        let result = parity(scores, eps, weights)?;
        for v in &result.failing_values {
            reasons.push(format!(
                "{}{name} parity: {v} deviates {:.3} from the expectation {:.3} (epsilon {eps:.2})",
                tag(parity_informational),
                result.deviation_of(v).unwrap_or(f64::NAN),
                result.expectation,
            ));
        }
        Ok(ParityGate {
            passed: result.passed(),
            result,
            informational: parity_informational,
        })
    };
    let inclusion_parity = parity_gate("inclusion", &inclusion)?;
    let quality_parity = parity_gate("quality", &quality)?;

    let all_passed = div_passed && inc_passed && inclusion_parity.passed && quality_parity.passed;
    Ok(AuditReport {
        config_fingerprint: opts.config_fingerprint.clone(),
        layer: opts.layer,
        diversity: DiversityGate {
            metric_used: opts.metric,
            score_kl: diversity.overall.score_kl,
            score_tvd: diversity.overall.score_tvd,
            threshold: thresholds.diversity_min,
            passed: div_passed,
            scores: diversity.clone(),
        },
        inclusion_gate: InclusionGate {
            threshold: thresholds.inclusion_min,
            values: entries,
            passed: inc_passed,
            informational: inc_informational,
        },
        inclusion_parity,
        quality_parity,
        cells: table.cells.clone(),
        verdict: if all_passed {
            Verdict::RepresentativityFair
        } else {
            Verdict::RepresentativityBias
        },
        reasons,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Structured,
}

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn info(informational: bool) -> &'static str {
    if informational {
        " [informational]"
    } else {
        ""
    }
}

fn render_parity(out: &mut String, name: &str, gate: &ParityGate) {
    let r = &gate.result;
    let _ = writeln!(
        out,
        "{name} parity: {} (expectation {:.3}, epsilon {:.2}){}",
        status(gate.passed),
        r.expectation,
        r.epsilon,
        info(gate.informational)
    );
    for e in &r.entries {
        let mark = if e.deviation > r.epsilon { "  <-- exceeds epsilon" } else { "" };
        let _ = writeln!(out, "  {:<20} {:.3}  deviation {:.3}{mark}", e.value, e.score, e.deviation);
    }
}

// Two decimals unless that would print score and threshold as equal.
fn pair(score: f64, threshold: f64) -> (String, String) {
    let mut digits = 2;
    while digits < 6 && format!("{score:.digits$}") == format!("{threshold:.digits$}") && score != threshold {
        digits += 1;
    }
    (format!("{score:.digits$}"), format!("{threshold:.digits$}"))
}

fn render_text(r: &AuditReport) -> String {
    let mut out = String::new();
    let fp = r.config_fingerprint.get(..12).unwrap_or(&r.config_fingerprint);
    let _ = writeln!(out, "representativity fairness audit (layer: {}, config {fp})", r.layer);

    let d = &r.diversity;
    let chosen = match d.metric_used {
        DiversityMetric::Kl => d.score_kl,
        DiversityMetric::Tvd => d.score_tvd,
    };
    let cmp = if d.passed { ">=" } else { "<" };
    let (shown, threshold) = pair(chosen, d.threshold);
    let _ = writeln!(
        out,
        "diversity gate: {} ({shown} {cmp} {threshold}) [metric {}; score_kl {:.3}, score_tvd {:.3}]",
        status(d.passed),
        d.metric_used,
        d.score_kl,
        d.score_tvd
    );
    for q in &d.scores.per_query {
        let _ = writeln!(
            out,
            "  {:<20} score_kl {:.3}  score_tvd {:.3}  (n={}, unlabeled {})",
            q.query.as_deref().unwrap_or("-"),
            q.score_kl,
            q.score_tvd,
            q.labeled,
            q.unlabeled
        );
    }

    let g = &r.inclusion_gate;
    let _ = writeln!(
        out,
        "inclusion gate: {} (every value > {:.2}){}",
        status(g.passed),
        g.threshold,
        info(g.informational)
    );
    for e in &g.values {
        let _ = writeln!(out, "  {:<20} {:.3}  {}", e.value, e.score, status(e.passed));
    }
    render_parity(&mut out, "inclusion", &r.inclusion_parity);
    render_parity(&mut out, "quality", &r.quality_parity);

    let _ = writeln!(out, "verdict: {}", r.verdict);
    if !r.reasons.is_empty() {
        let _ = writeln!(out, "reasons:");
        for reason in &r.reasons {
            let _ = writeln!(out, "  - {reason}");
        }
    }
    out
}

/// Text lists every gate in framework order; structured is pretty JSON.
pub fn render_report(report: &AuditReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

pub fn parse_report(text: &str) -> Result<AuditReport, DecisionError> {
    serde_json::from_str(text).map_err(|e| DecisionError::Malformed(e.to_string()))
}
