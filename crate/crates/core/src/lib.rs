//! Representativity fairness audits for text-to-image systems.
//!
//! The engine plans the prompts an external generator must run, ingests the
//! resulting annotation records (model layer plus human corrections), scores
//! diversity, inclusion and quality, checks multi-class statistical parity,
//! and renders a bias verdict.
//!
//! Metric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix them to `f64`, which is what the pipeline uses.

pub mod config;
pub mod decision;
pub mod diversity;
pub mod fixture;
pub mod ingest;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod plan;
pub mod rng;
mod scalar;
pub mod scoring;

pub use scalar::Scalar;

pub use config::{load_config, save_config, validate_config, EvalConfig, Thresholds};
pub use decision::{decide, render_report, AuditReport, DecideOptions, ReportFormat, Verdict};
pub use ingest::{merge_layers, CorrectionEvent, ImageRecord, Layer};
pub use plan::{build_plan, render_prompt, PromptJob};
pub use scoring::{Persona, ScoreTable};

pub type Distribution = metrics::Distribution<f64>;
pub type ParityResult = metrics::ParityResult<f64>;
pub type AgreementResult = metrics::AgreementResult<f64>;
