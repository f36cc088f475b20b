//! Review and survey tasks, and the responses collected for them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use ttifair_core::ingest::{filter_pool, ImageRecord};
use ttifair_core::rng::NamedStream;
use ttifair_core::scoring::{crowd_inclusion_score, crowd_quality_score, CrowdAnswer, CrowdCell, CrowdTally};
use ttifair_core::EvalConfig;

/// Image sets shown per (value, query) in either survey.
pub const SETS_PER_QUERY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    AnnotationReview,
    InclusionSurvey,
    QualitySurvey,
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "annotation-review" => Ok(TaskKind::AnnotationReview),
            "inclusion-survey" => Ok(TaskKind::InclusionSurvey),
            "quality-survey" => Ok(TaskKind::QualitySurvey),
            other => Err(format!("unknown task kind {other:?}")),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::AnnotationReview => "annotation-review",
            TaskKind::InclusionSurvey => "inclusion-survey",
            TaskKind::QualitySurvey => "quality-survey",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub query: String,
    pub conditioned_value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub task_id: String,
    pub kind: TaskKind,
    pub image_set: Vec<String>,
    pub context: TaskContext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_labels: Option<ImageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
    pub respondent_id: String,
    pub declared_value: String,
    pub declared_age: u32,
    pub declared_gender: String,
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<CrowdAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_count: Option<usize>,
    pub timestamp: DateTime<Utc>,
}

/// Every task the service can hand out, built once at startup.
#[derive(Debug, Clone, Default)]
pub struct TaskBook {
    tasks: Vec<ReviewTask>,
    by_id: HashMap<String, usize>,
}

fn survey_prefix(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::InclusionSurvey => "inc",
        TaskKind::QualitySurvey => "qual",
        TaskKind::AnnotationReview => "rev",
    }
}

impl TaskBook {
    /// Review tasks follow record order. Survey sets for a (value, query)
    /// cell come from one shuffle of that cell's images on a stream named
    /// after the cell, so every respondent and both surveys see the same
    /// sets.
    pub fn build(cfg: &EvalConfig, records: &[ImageRecord]) -> Self {
        let mut tasks: Vec<ReviewTask> = records
            .iter()
            .map(|r| ReviewTask {
                task_id: format!("rev-{}", r.image_id),
                kind: TaskKind::AnnotationReview,
                image_set: vec![r.image_id.clone()],
                context: TaskContext {
                    query: r.query.clone(),
                    conditioned_value: r.conditioned_value.clone(),
                },
                current_labels: Some(r.clone()),
            })
            .collect();

        let set_size = cfg.images_per_seed.max(1) as usize;
        for kind in [TaskKind::InclusionSurvey, TaskKind::QualitySurvey] {
            for (ai, value) in cfg.attribute.values.iter().enumerate() {
                for (qi, query) in cfg.queries.iter().enumerate() {
                    let mut ids: Vec<String> = filter_pool(records, query, Some(value))
                        .iter()
                        .map(|r| r.image_id.clone())
                        .collect();
                    let stream =
                        NamedStream::new(cfg.master_seed, &format!("survey/{value}/{query}"));
                    ids.shuffle(&mut stream.rng());
                    for (k, set) in ids.chunks(set_size).take(SETS_PER_QUERY).enumerate() {
                        tasks.push(ReviewTask {
                            task_id: format!("{}-a{ai:02}-q{qi:02}-s{k}", survey_prefix(kind)),
                            kind,
                            image_set: set.to_vec(),
                            context: TaskContext {
                                query: query.clone(),
                                conditioned_value: Some(value.clone()),
                            },
                            current_labels: None,
                        });
                    }
                }
            }
        }
        let by_id = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.task_id.clone(), i))
            .collect();
        Self { tasks, by_id }
    }

    pub fn get(&self, task_id: &str) -> Option<&ReviewTask> {
        self.by_id.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn filter<'a>(
        &'a self,
        kind: TaskKind,
        value: Option<&'a str>,
        query: Option<&'a str>,
    ) -> impl Iterator<Item = &'a ReviewTask> + 'a {
        self.tasks.iter().filter(move |t| {
            t.kind == kind
                && value.is_none_or(|v| t.context.conditioned_value.as_deref() == Some(v))
                && query.is_none_or(|q| t.context.query == q)
        })
    }
}

/// Checks a response against its task; the message explains a rejection.
pub fn check_response(
    resp: &SurveyResponse,
    task: &ReviewTask,
    cfg: &EvalConfig,
) -> Result<(), String> {
    if resp.respondent_id.trim().is_empty() {
        return Err("respondent_id must be non-empty".into());
    }
    if cfg.attribute.index_of(&resp.declared_value).is_none() {
        return Err(format!(
            "{:?} is not a value of {}",
            resp.declared_value, cfg.attribute.name
        ));
    }
    if task.context.conditioned_value.as_deref() != Some(resp.declared_value.as_str()) {
        return Err(format!(
            "task {} is for respondents identifying as {:?}",
            task.task_id,
            task.context.conditioned_value.as_deref().unwrap_or("-")
        ));
    }
    if resp.declared_age > 120 {
        return Err(format!("declared_age {} is not plausible", resp.declared_age));
    }
    if let Some(g) = cfg.feature("gender") {
        if !g.categories.contains(&resp.declared_gender) {
            return Err(format!("{:?} is not a gender category", resp.declared_gender));
        }
    }
    match (task.kind, resp.answer, resp.selected_count) {
        (TaskKind::InclusionSurvey, Some(_), None) => Ok(()),
        (TaskKind::QualitySurvey, None, Some(n)) if n <= task.image_set.len() => Ok(()),
        (TaskKind::QualitySurvey, None, Some(n)) => Err(format!(
            "selected_count {n} exceeds the set size {}",
            task.image_set.len()
        )),
        (TaskKind::InclusionSurvey, _, _) => {
            Err("inclusion surveys take an answer (both, either or none) only".into())
        }
        (TaskKind::QualitySurvey, _, _) => Err("quality surveys take selected_count only".into()),
        (TaskKind::AnnotationReview, _, _) => {
            Err("annotation-review tasks take corrections, not survey responses".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySummary {
    pub inclusion: Vec<CrowdCell>,
    pub quality: Vec<CrowdCell>,
}

/// Plain means per (value, query) with their respondent counts.
pub fn summarize(responses: &[SurveyResponse], tasks: &TaskBook) -> SurveySummary {
    let mut inclusion = CrowdTally::default();
    let mut quality = CrowdTally::default();
    for r in responses {
        let Some(task) = tasks.get(&r.task_id) else {
            continue;
        };
        let value = task.context.conditioned_value.as_deref().unwrap_or("-");
        match (task.kind, r.answer, r.selected_count) {
            (TaskKind::InclusionSurvey, Some(a), _) => {
                inclusion.add(value, &task.context.query, crowd_inclusion_score(a))
            }
            (TaskKind::QualitySurvey, _, Some(n)) => {
                if let Ok(s) = crowd_quality_score(n, task.image_set.len()) {
                    quality.add(value, &task.context.query, s);
                }
            }
            _ => {}
        }
    }
    SurveySummary {
        inclusion: inclusion.cells(),
        quality: quality.cells(),
    }
}
