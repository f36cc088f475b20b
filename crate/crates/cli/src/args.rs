use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ttifair_core::diversity::DiversityMetric;

#[derive(Debug, Parser)]
#[command(name = "ttifair", version, about = "Representativity fairness audits for text-to-image systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand a config into the generation jobs to run.
    Plan(PlanArgs),
    /// Validate annotation records (and corrections) and summarize them.
    Ingest(IngestArgs),
    /// Score diversity, inclusion and quality for each annotation layer.
    Score(ScoreArgs),
    /// Apply the gates to a score document and write the report.
    Decide(DecideArgs),
    /// Pearson and Spearman agreement between two numeric series.
    Agree(AgreeArgs),
    /// Run the review and survey HTTP service.
    Serve(ServeArgs),
    /// Score and decide in one go.
    Audit(AuditArgs),
    /// Write synthetic annotation records for the configured plan.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Audit config (TOML, or JSON for a .json path).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Annotation records, one JSON object per line.
    #[arg(long)]
    pub records: PathBuf,
    /// Reviewer correction log; its presence adds a human layer.
    #[arg(long)]
    pub corrections: Option<PathBuf>,
    /// Relevance confidences replacing the model layer's relevance labels.
    #[arg(long)]
    pub confidences: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayerArg {
    Model,
    Human,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum MetricArg {
    #[default]
    Kl,
    Tvd,
}

impl From<MetricArg> for DiversityMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Kl => DiversityMetric::Kl,
            MetricArg::Tvd => DiversityMetric::Tvd,
        }
    }
}

#[derive(Debug, Args)]
pub struct GateArgs {
    /// Layer to decide on; defaults to human when a correction log was scored.
    #[arg(long, value_enum)]
    pub layer: Option<LayerArg>,
    /// Metric the diversity gate uses (both are always reported).
    #[arg(long, value_enum, default_value_t)]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = "plan.json")]
    pub out: PathBuf,
    /// Print the counts without writing the plan.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Where to write the summary document (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long, default_value = "scores.json")]
    pub out: PathBuf,
    /// Use 1 - exp(-KL) as the KL diversity score instead of exp(-KL).
    #[arg(long)]
    pub eq6_literal: bool,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Score document written by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub gates: GateArgs,
    /// Directory for report.json and report.txt.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    /// File of numbers separated by whitespace or commas; `#` starts a comment.
    pub series_a: PathBuf,
    pub series_b: PathBuf,
    /// Also write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, env = "TTIFAIR_IMAGE_ROOT")]
    pub image_root: PathBuf,
    /// Append-only correction and survey log.
    #[arg(long, env = "TTIFAIR_LOG_PATH")]
    pub log: PathBuf,
    #[arg(long, env = "TTIFAIR_BIND_ADDR", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, value_enum, default_value_t)]
    pub metric: MetricArg,
    #[arg(long)]
    pub eq6_literal: bool,
    /// Score once at startup so /api/report is available immediately.
    #[arg(long)]
    pub score_on_start: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub gates: GateArgs,
    #[arg(long)]
    pub eq6_literal: bool,
    /// Directory for scores.json, report.json and report.txt.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = "records.jsonl")]
    pub out: PathBuf,
    /// Race weights for unconditioned images, comma separated, in attribute order.
    #[arg(long, value_delimiter = ',')]
    pub skew: Option<Vec<f64>>,
    /// Probability that a conditioned image shows the requested value.
    #[arg(long, default_value_t = 0.9)]
    pub adherence: f64,
    /// Probability that an image's race label is "-".
    #[arg(long, default_value_t = 0.05)]
    pub unlabeled_rate: f64,
}
