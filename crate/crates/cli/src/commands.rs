use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use ttifair_core::config::ConfigError;
use ttifair_core::decision::{render_report, AuditReport, ReportFormat, Verdict};
use ttifair_core::diversity::DiversityMetric;
use ttifair_core::fixture::{synthetic_records, SyntheticProfile};
use ttifair_core::ingest::{
    count_labels, merge_layers, parse_confidences, parse_corrections, read_records,
    write_records, ConfidenceRecord, CorrectionEvent, ImageRecord, Layer, LineError,
    SkippedCorrection,
};
use ttifair_core::manifest::{digest_file, InputDigest, RunManifest};
use ttifair_core::metrics::{agreement, KlScoreForm};
use ttifair_core::pipeline::{decide_layer, score_layers, ScoreDocument, ScoreInputs, ScoreOptions};
use ttifair_core::plan::{build_plan, PlanSummary, PromptJob};
use ttifair_core::{load_config, EvalConfig};
use ttifair_service::{AppState, ServiceSettings};

use crate::args::*;

/// What a successful command concluded; maps onto the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Bias,
}

fn load(args: &ConfigArgs) -> Result<EvalConfig> {
    let mut cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(ConfigError::Invalid(violations)) => {
            let list: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
            bail!(
                "invalid config {}:\n{}",
                args.config.display(),
                list.join("\n")
            );
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn digest(role: &str, path: &Path) -> Result<InputDigest> {
    digest_file(role, path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn line_errors(path: &Path, errors: &[LineError]) -> anyhow::Error {
    let list: Vec<String> = errors.iter().map(|e| format!("  {e}")).collect();
    anyhow!(
        "{} bad line(s) in {}:\n{}",
        errors.len(),
        path.display(),
        list.join("\n")
    )
}

fn read_record_file(path: &Path) -> Result<Vec<ImageRecord>> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let parsed = read_records(std::io::BufReader::new(file))?;
    if !parsed.errors.is_empty() {
        return Err(line_errors(path, &parsed.errors));
    }
    Ok(parsed.records)
}

struct Inputs {
    records: Vec<ImageRecord>,
    corrections: Option<Vec<CorrectionEvent>>,
    confidences: Option<Vec<ConfidenceRecord>>,
    digests: Vec<InputDigest>,
}

fn read_inputs(config: &Path, args: &InputArgs) -> Result<Inputs> {
    let mut digests = vec![digest("config", config)?, digest("records", &args.records)?];
    let records = read_record_file(&args.records)?;
    let corrections = match &args.corrections {
        None => None,
        Some(p) => {
            digests.push(digest("corrections", p)?);
            Some(parse_corrections(p).with_context(|| format!("in {}", p.display()))?)
        }
    };
    let confidences = match &args.confidences {
        None => None,
        Some(p) => {
            digests.push(digest("confidences", p)?);
            Some(parse_confidences(p).with_context(|| format!("in {}", p.display()))?)
        }
    };
    Ok(Inputs {
        records,
        corrections,
        confidences,
        digests,
    })
}

#[derive(Serialize)]
struct PlanDocument<'a> {
    manifest: RunManifest,
    summary: PlanSummary,
    jobs: &'a [PromptJob],
}

pub fn plan(args: &PlanArgs) -> Result<Outcome> {
    let cfg = load(&args.config)?;
    let jobs = build_plan(&cfg)?;
    let s = PlanSummary::of(&jobs);
    println!(
        "diversity: {} images across {} jobs",
        s.diversity_images, s.diversity_jobs
    );
    println!(
        "conditioned: {} images across {} jobs",
        s.conditioned_images, s.conditioned_jobs
    );
    println!("total: {} images across {} jobs", s.total_images(), s.total_jobs());
    if !args.dry_run {
        let manifest = RunManifest::new(&cfg, vec![digest("config", &args.config.config)?]);
        write_json(
            &args.out,
            &PlanDocument {
                manifest,
                summary: s,
                jobs: &jobs,
            },
        )?;
        eprintln!("wrote {}", args.out.display());
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Default, Serialize)]
struct UnlabeledCounts {
    race: usize,
    age: usize,
    gender: usize,
    relevance: usize,
    quality: usize,
}

#[derive(Serialize)]
struct IngestDocument {
    manifest: RunManifest,
    records: usize,
    diversity_records: usize,
    conditioned_records: usize,
    unlabeled: UnlabeledCounts,
    race_counts: Vec<(String, usize)>,
    corrections: Option<usize>,
    corrected_records: usize,
    skipped_corrections: Vec<SkippedCorrection>,
    rejected_corrections: Vec<LineError>,
    confidences: Option<usize>,
}

pub fn ingest(args: &IngestArgs) -> Result<Outcome> {
    let cfg = load(&args.config)?;
    let inputs = read_inputs(&args.config.config, &args.inputs)?;
    let recs = &inputs.records;
    let mut unlabeled = UnlabeledCounts::default();
    for r in recs {
        unlabeled.race += usize::from(!r.race.is_labeled());
        unlabeled.age += usize::from(!r.age.is_labeled());
        unlabeled.gender += usize::from(!r.gender.is_labeled());
        unlabeled.relevance += usize::from(!r.relevance.is_labeled());
        unlabeled.quality += usize::from(!r.quality.is_labeled());
    }
    let counts = count_labels(recs, &cfg.attribute)?;
    let log = inputs.corrections.as_deref().unwrap_or(&[]);
    // domain checks against the config, reported by position in the log
    let rejected: Vec<LineError> = log
        .iter()
        .enumerate()
        .filter_map(|(i, ev)| ev.check(Some(&cfg)).err().map(|m| LineError::new(i + 1, m)))
        .collect();
    let merged = merge_layers(recs, log);
    let corrected = merged
        .records
        .iter()
        .filter(|r| r.layer == Layer::Human)
        .count();
    let doc = IngestDocument {
        manifest: RunManifest::new(&cfg, inputs.digests),
        records: recs.len(),
        diversity_records: recs.iter().filter(|r| r.is_diversity()).count(),
        conditioned_records: recs.iter().filter(|r| !r.is_diversity()).count(),
        unlabeled,
        race_counts: cfg
            .attribute
            .values
            .iter()
            .cloned()
            .zip(counts.counts.iter().copied())
            .collect(),
        corrections: inputs.corrections.as_ref().map(Vec::len),
        corrected_records: corrected,
        skipped_corrections: merged.skipped,
        rejected_corrections: rejected,
        confidences: inputs.confidences.as_ref().map(Vec::len),
    };
    eprintln!(
        "{} records ({} diversity, {} conditioned), {} with race unlabeled",
        doc.records, doc.diversity_records, doc.conditioned_records, doc.unlabeled.race
    );
    match &args.out {
        Some(p) => write_json(p, &doc)?,
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    if let Some(p) = &args.inputs.corrections {
        if !doc.rejected_corrections.is_empty() {
            return Err(line_errors(p, &doc.rejected_corrections));
        }
    }
    Ok(Outcome::Done)
}

fn score_document(
    cfg: &EvalConfig,
    inputs: Inputs,
    eq6_literal: bool,
) -> Result<ScoreDocument> {
    let opts = ScoreOptions {
        kl_form: if eq6_literal {
            KlScoreForm::Literal
        } else {
            KlScoreForm::Exponential
        },
    };
    let scored = score_layers(
        cfg,
        ScoreInputs {
            records: &inputs.records,
            corrections: inputs.corrections.as_deref(),
            confidences: inputs.confidences.as_deref(),
        },
        opts,
    )?;
    for w in &scored.warnings {
        eprintln!("warning: {w}");
    }
    Ok(scored.into_document(RunManifest::new(cfg, inputs.digests)))
}

pub fn score(args: &ScoreArgs) -> Result<Outcome> {
    let cfg = load(&args.config)?;
    let inputs = read_inputs(&args.config.config, &args.inputs)?;
    let doc = score_document(&cfg, inputs, args.eq6_literal)?;
    write_json(&args.out, &doc)?;
    eprintln!(
        "wrote {} ({} cells{})",
        args.out.display(),
        doc.model.table.cells.len(),
        if doc.human.is_some() { ", model and human layers" } else { "" }
    );
    Ok(Outcome::Done)
}

/// A structured report together with the provenance of the run.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDocument {
    pub manifest: RunManifest,
    pub report: AuditReport,
}

fn manifest_header(m: &RunManifest) -> String {
    let mut out = format!("# {} {}", m.tool, m.tool_version);
    if let (Some(fp), Some(seed)) = (&m.config_fingerprint, m.master_seed) {
        out += &format!(", config {fp}, master seed {seed}");
    }
    out += &format!(", created {}\n", m.created_at.to_rfc3339());
    for i in &m.inputs {
        out += &format!("# {} {} sha256:{}\n", i.role, i.path, i.sha256);
    }
    out
}

fn layers_to_decide(doc: &ScoreDocument, arg: Option<LayerArg>) -> Result<Vec<Layer>> {
    let layers = match arg {
        None => vec![doc.default_layer()],
        Some(LayerArg::Model) => vec![Layer::Model],
        Some(LayerArg::Human) => vec![Layer::Human],
        Some(LayerArg::Both) => vec![Layer::Model, Layer::Human],
    };
    if layers.contains(&Layer::Human) && doc.human.is_none() {
        bail!("no human layer was scored; pass --corrections when scoring");
    }
    Ok(layers)
}

fn write_reports(
    cfg: &EvalConfig,
    doc: &ScoreDocument,
    gates: &GateArgs,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<Outcome> {
    let layers = layers_to_decide(doc, gates.layer)?;
    let metric = DiversityMetric::from(gates.metric);
    let mut outcome = Outcome::Done;
    for layer in &layers {
        let scores = doc.layer(*layer).expect("layer checked above");
        let report = decide_layer(cfg, scores, metric)?;
        let stem = if layers.len() > 1 {
            format!("report-{layer}")
        } else {
            "report".to_owned()
        };
        let text = render_report(&report, ReportFormat::Text);
        write_file(
            &out_dir.join(format!("{stem}.txt")),
            format!("{}{text}", manifest_header(manifest)).as_bytes(),
        )?;
        print!("{text}");
        if report.verdict == Verdict::RepresentativityBias {
            outcome = Outcome::Bias;
        }
        write_json(
            &out_dir.join(format!("{stem}.json")),
            &ReportDocument {
                manifest: manifest.clone(),
                report,
            },
        )?;
    }
    Ok(outcome)
}

pub fn decide(args: &DecideArgs) -> Result<Outcome> {
    let cfg = load(&ConfigArgs {
        config: args.config.clone(),
        seed: None,
    })?;
    let text = fs::read_to_string(&args.scores)
        .with_context(|| format!("cannot read {}", args.scores.display()))?;
    let doc: ScoreDocument = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a score document", args.scores.display()))?;
    let fp = cfg.fingerprint();
    if doc.manifest.config_fingerprint.as_deref() != Some(fp.as_str()) {
        eprintln!("warning: scores were computed under a different config");
    }
    let manifest = RunManifest::new(
        &cfg,
        vec![digest("config", &args.config)?, digest("scores", &args.scores)?],
    );
    write_reports(&cfg, &doc, &args.gates, &manifest, &args.out)
}

pub fn audit(args: &AuditArgs) -> Result<Outcome> {
    let cfg = load(&args.config)?;
    let inputs = read_inputs(&args.config.config, &args.inputs)?;
    let doc = score_document(&cfg, inputs, args.eq6_literal)?;
    write_json(&args.out.join("scores.json"), &doc)?;
    let manifest = doc.manifest.clone();
    write_reports(&cfg, &doc, &args.gates, &manifest, &args.out)
}

fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| {
                anyhow!("{} line {}: {tok:?} is not a number", path.display(), i + 1)
            })?;
            out.push(v);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct AgreementDocument {
    manifest: RunManifest,
    pearson: f64,
    spearman: f64,
    n: usize,
}

pub fn agree(args: &AgreeArgs) -> Result<Outcome> {
    let a = read_series(&args.series_a)?;
    let b = read_series(&args.series_b)?;
    let r = agreement(&a, &b)?;
    println!("pearson {:.6}", r.pearson);
    println!("spearman {:.6}", r.spearman);
    println!("n {}", r.n);
    if let Some(out) = &args.out {
        let manifest = RunManifest::without_config(vec![
            digest("series_a", &args.series_a)?,
            digest("series_b", &args.series_b)?,
        ]);
        write_json(
            out,
            &AgreementDocument {
                manifest,
                pearson: r.pearson,
                spearman: r.spearman,
                n: r.n,
            },
        )?;
    }
    Ok(Outcome::Done)
}

pub fn serve(args: &ServeArgs) -> Result<Outcome> {
    let cfg = load(&args.config)?;
    let records = read_record_file(&args.records)?;
    let mut settings = ServiceSettings {
        image_root: args.image_root.clone(),
        log_path: args.log.clone(),
        token: std::env::var(ttifair_service::ENV_TOKEN).ok().filter(|t| !t.is_empty()),
        bind_addr: args.bind,
        metric: args.metric.into(),
        score_options: ScoreOptions::default(),
    };
    if args.eq6_literal {
        settings.score_options.kl_form = KlScoreForm::Literal;
    }
    if settings.token.is_none() {
        eprintln!("warning: {} is not set; the API is unauthenticated", ttifair_service::ENV_TOKEN);
    }
    let state = AppState::new(cfg, records, &settings)?;
    if args.score_on_start {
        state.rescore().context("initial scoring failed")?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(ttifair_service::serve(state, settings.bind_addr))?;
    Ok(Outcome::Done)
}

pub fn synth(args: &SynthArgs) -> Result<Outcome> {
    let cfg = load(&args.config)?;
    let profile = SyntheticProfile {
        diversity_weights: args.skew.clone(),
        adherence: args.adherence,
        unlabeled_rate: args.unlabeled_rate,
        ..Default::default()
    };
    if !(0.0..=1.0).contains(&profile.adherence) || !(0.0..=1.0).contains(&profile.unlabeled_rate) {
        bail!("--adherence and --unlabeled-rate must be in [0, 1]");
    }
    if let Some(w) = &profile.diversity_weights {
        if w.len() != cfg.attribute.values.len() {
            bail!(
                "--skew needs {} weights, got {}",
                cfg.attribute.values.len(),
                w.len()
            );
        }
    }
    let records = synthetic_records(&cfg, &profile, "cli")?;
    let mut buf = Vec::new();
    write_records(&records, &mut buf)?;
    write_file(&args.out, &buf)?;
    let mut err = std::io::stderr();
    writeln!(err, "wrote {} records to {}", records.len(), args.out.display())?;
    Ok(Outcome::Done)
}
