use std::path::Path;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use ttifair_core::decision::{render_report, ReportFormat};
use ttifair_core::diversity::DiversityMetric;
use ttifair_core::fixture::{synthetic_records, SyntheticProfile};
use ttifair_core::ingest::{read_corrections, ImageRecord, Label};
use ttifair_core::pipeline::{decide_layer, score_layers, ScoreInputs, ScoreOptions};
use ttifair_core::EvalConfig;
use ttifair_service::{router, AppState, ServiceSettings};

struct Fixture {
    dir: tempfile::TempDir,
    cfg: EvalConfig,
    records: Vec<ImageRecord>,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = EvalConfig::occupation_study();
        cfg.personas.count = 300;
        let records = synthetic_records(&cfg, &SyntheticProfile::default(), "svc").unwrap();
        let images = dir.path().join("images");
        std::fs::create_dir(&images).unwrap();
        std::fs::write(images.join(format!("{}.png", records[0].image_id)), b"\x89PNG fake").unwrap();
        std::fs::write(dir.path().join("secret.png"), b"top secret").unwrap();
        Self { dir, cfg, records }
    }

    fn settings(&self, token: Option<&str>) -> ServiceSettings {
        ServiceSettings {
            image_root: self.dir.path().join("images"),
            log_path: self.dir.path().join("events.jsonl"),
            token: token.map(str::to_owned),
            bind_addr: "127.0.0.1:0".parse().unwrap(),
            metric: DiversityMetric::Kl,
            score_options: ScoreOptions::default(),
        }
    }

    fn app(&self) -> Router {
        self.app_with(None)
    }

    fn app_with(&self, token: Option<&str>) -> Router {
        let state = AppState::new(self.cfg.clone(), self.records.clone(), &self.settings(token)).unwrap();
        router(state)
    }

    fn log_path(&self) -> std::path::PathBuf {
        self.dir.path().join("events.jsonl")
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn correction(image_id: &str, field: &str, value: Value) -> Value {
    json!({
        "reviewer_id": "rev-1",
        "image_id": image_id,
        "field": field,
        "old_value": "-",
        "new_value": value,
        "timestamp": "2023-06-01T10:00:00Z",
    })
}

#[tokio::test]
async fn task_listing() {
    let fx = Fixture::new();
    let app = fx.app();
    let (s, v) = call_json(&app, "GET", "/api/tasks?kind=quality-survey&value=Middle%20Eastern", None).await;
    assert_eq!(s, StatusCode::OK);
    let tasks = v.as_array().unwrap();
    assert_eq!(tasks.len(), 18);
    assert!(tasks.iter().all(|t| t["image_set"].as_array().unwrap().len() == 5));

    // both surveys show the same sets
    let (_, inc) = call_json(&app, "GET", "/api/tasks?kind=inclusion-survey&value=Middle%20Eastern", None).await;
    let sets = |v: &Value| -> Vec<Value> { v.as_array().unwrap().iter().map(|t| t["image_set"].clone()).collect() };
    assert_eq!(sets(&inc), sets(&v));

    let (_, all) = call_json(&app, "GET", "/api/tasks?kind=annotation-review", None).await;
    assert_eq!(all.as_array().unwrap().len(), 1110);
    assert!(all[0]["current_labels"]["image_id"].is_string());

    let (_, one) = call_json(&app, "GET", "/api/tasks?kind=quality-survey&value=Asian&query=baker", None).await;
    assert_eq!(one.as_array().unwrap().len(), 3);

    assert_eq!(call(&app, "GET", "/api/tasks?kind=bogus", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "GET", "/api/tasks", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        call(&app, "GET", "/api/tasks?kind=quality-survey&value=Martian", None).await.0,
        StatusCode::NOT_FOUND
    );

    // stable across restarts
    let (_, again) = call_json(&fx.app(), "GET", "/api/tasks?kind=quality-survey&value=Middle%20Eastern", None).await;
    assert_eq!(again, v);
}

#[tokio::test]
async fn corrections_are_validated_logged_and_exported() {
    let fx = Fixture::new();
    let app = fx.app();
    let id = fx.records[3].image_id.clone();

    let (s, ack) = call_json(&app, "POST", "/api/corrections", Some(correction(&id, "race", json!("Latino")))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(ack["status"], "stored");

    let (s, _) = call(&app, "POST", "/api/corrections", Some(correction(&id, "gender", json!("-")))).await;
    assert_eq!(s, StatusCode::CREATED);

    let bad = [
        correction(&id, "quality", json!(5)),
        correction(&id, "race", json!("Martian")),
        correction(&id, "age", json!("old")),
        correction(&id, "hair", json!("red")),
    ];
    for b in bad {
        assert_eq!(call(&app, "POST", "/api/corrections", Some(b)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    }
    let (s, _) = call(&app, "POST", "/api/corrections", Some(correction("nope", "race", json!("Asian")))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    // client ids make retries idempotent
    let mut with_id = correction(&id, "age", json!(44));
    with_id["event_id"] = json!("client-1");
    assert_eq!(call(&app, "POST", "/api/corrections", Some(with_id.clone())).await.0, StatusCode::CREATED);
    let (s, ack) = call_json(&app, "POST", "/api/corrections", Some(with_id)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ack["status"], "duplicate");
    // so do content ids
    let (s, _) = call(&app, "POST", "/api/corrections", Some(correction(&id, "race", json!("Latino")))).await;
    assert_eq!(s, StatusCode::OK);

    let (s, body) = call(&app, "GET", "/api/corrections/export", None).await;
    assert_eq!(s, StatusCode::OK);
    let events = read_corrections(&body[..]).unwrap();
    assert_eq!(events.len(), 3);
    assert_eq!(events[0].image_id, id);
    assert_eq!(events[2].event_id.as_deref(), Some("client-1"));
}

#[tokio::test]
async fn surveys_and_summary() {
    let fx = Fixture::new();
    let app = fx.app();
    let (_, inc) = call_json(&app, "GET", "/api/tasks?kind=inclusion-survey&value=Black&query=doctor", None).await;
    let (_, qual) = call_json(&app, "GET", "/api/tasks?kind=quality-survey&value=Black&query=doctor", None).await;
    let inc_id = inc[0]["task_id"].as_str().unwrap();
    let qual_id = qual[0]["task_id"].as_str().unwrap();
    let resp = |task: &str, extra: Value| {
        let mut v = json!({
            "respondent_id": "p1",
            "declared_value": "Black",
            "declared_age": 31,
            "declared_gender": "woman",
            "task_id": task,
            "timestamp": "2023-06-02T09:00:00Z",
        });
        for (k, x) in extra.as_object().unwrap() {
            v[k] = x.clone();
        }
        v
    };

    let (s, _) = call(&app, "POST", "/api/surveys", Some(resp(inc_id, json!({"answer": "both"})))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) = call(&app, "POST", "/api/surveys", Some(resp(inc_id, json!({"answer": "either", "respondent_id": "p2"})))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) = call(&app, "POST", "/api/surveys", Some(resp(qual_id, json!({"selected_count": 2})))).await;
    assert_eq!(s, StatusCode::CREATED);

    let rejects = [
        resp(qual_id, json!({"selected_count": 6})),
        resp(inc_id, json!({"answer": "maybe"})),
        resp(inc_id, json!({"selected_count": 1})),
        resp(qual_id, json!({"answer": "both"})),
        resp(inc_id, json!({"answer": "both", "declared_value": "Asian"})),
        resp(inc_id, json!({"answer": "both", "declared_gender": "robot"})),
    ];
    for r in rejects {
        let (s, b) = call(&app, "POST", "/api/surveys", Some(r.clone())).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{r} -> {}", String::from_utf8_lossy(&b));
    }
    let (s, _) = call(&app, "POST", "/api/surveys", Some(resp("inc-zz", json!({"answer": "both"})))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, summary) = call_json(&app, "GET", "/api/surveys/summary", None).await;
    assert_eq!(summary["inclusion"][0]["mean"], 0.75);
    assert_eq!(summary["inclusion"][0]["n"], 2);
    assert_eq!(summary["quality"][0]["mean"], 0.4);
    assert_eq!(summary["quality"][0]["value"], "Black");
}

#[tokio::test]
async fn survey_loop_means() {
    let fx = Fixture::new();
    let app = fx.app();
    let (_, inc) = call_json(&app, "GET", "/api/tasks?kind=inclusion-survey&value=Latino&query=baker", None).await;
    let (_, qual) = call_json(&app, "GET", "/api/tasks?kind=quality-survey&value=Latino&query=baker", None).await;
    assert_eq!(qual[0]["image_set"].as_array().unwrap().len(), 5);
    let base = |i: usize, task: &Value| {
        json!({
            "respondent_id": format!("p{i}"),
            "declared_value": "Latino",
            "declared_age": 20 + i,
            "declared_gender": "man",
            "task_id": task["task_id"],
            "timestamp": "2023-06-02T09:00:00Z",
        })
    };
    for (i, answer) in ["both", "either", "none"].iter().enumerate() {
        let mut r = base(i, &inc[i]);
        r["answer"] = json!(answer);
        let (s, _) = call(&app, "POST", "/api/surveys", Some(r)).await;
        assert_eq!(s, StatusCode::CREATED);
    }
    for (i, n) in [0, 3, 5].iter().enumerate() {
        let mut r = base(i, &qual[i]);
        r["selected_count"] = json!(n);
        let (s, _) = call(&app, "POST", "/api/surveys", Some(r)).await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let (_, summary) = call_json(&app, "GET", "/api/surveys/summary", None).await;
    assert_eq!(summary["inclusion"][0]["mean"], 0.5);
    assert_eq!(summary["inclusion"][0]["n"], 3);
    let q = summary["quality"][0]["mean"].as_f64().unwrap();
    assert!((q - 8.0 / 15.0).abs() < 1e-12, "{q}");
}

#[tokio::test]
async fn image_bytes_and_traversal_guard() {
    let fx = Fixture::new();
    let app = fx.app();
    let id = &fx.records[0].image_id;
    let resp = app
        .clone()
        .oneshot(Request::get(format!("/api/images/{id}")).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "image/png");
    assert_eq!(resp.into_body().collect().await.unwrap().to_bytes().as_ref(), b"\x89PNG fake");

    assert_eq!(call(&app, "GET", "/api/images/nope", None).await.0, StatusCode::NOT_FOUND);
    // known record without a file
    let other = &fx.records[1].image_id;
    assert_eq!(call(&app, "GET", &format!("/api/images/{other}"), None).await.0, StatusCode::NOT_FOUND);
    for evil in ["..%2Fsecret", "..", "%2E%2E%2Fsecret.png", "..%5Csecret"] {
        assert_eq!(call(&app, "GET", &format!("/api/images/{evil}"), None).await.0, StatusCode::FORBIDDEN, "{evil}");
    }
}

#[tokio::test]
async fn bearer_token() {
    let fx = Fixture::new();
    let app = fx.app_with(Some("s3cret"));
    assert_eq!(call(&app, "GET", "/api/meta", None).await.0, StatusCode::UNAUTHORIZED);
    let req = Request::get("/api/meta")
        .header(header::AUTHORIZATION, "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::OK);
    let req = Request::get("/api/meta")
        .header(header::AUTHORIZATION, "Bearer nope")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::UNAUTHORIZED);
    let id = &fx.records[0].image_id;
    assert_eq!(call(&app, "GET", &format!("/api/images/{id}?token=s3cret"), None).await.0, StatusCode::OK);
}

fn cli_equivalent(fx: &Fixture, corrections_jsonl: &[u8], layer_human: bool) -> String {
    let log = read_corrections(corrections_jsonl).unwrap();
    let scored = score_layers(
        &fx.cfg,
        ScoreInputs {
            records: &fx.records,
            corrections: Some(&log),
            confidences: None,
        },
        ScoreOptions::default(),
    )
    .unwrap();
    let layer = if layer_human { scored.human.as_ref().unwrap() } else { &scored.model };
    render_report(&decide_layer(&fx.cfg, layer, DiversityMetric::Kl).unwrap(), ReportFormat::Structured)
}

#[tokio::test]
async fn report_follows_corrections() {
    let fx = Fixture::new();
    let app = fx.app();
    assert_eq!(call(&app, "GET", "/api/report", None).await.0, StatusCode::CONFLICT);
    assert_eq!(call(&app, "POST", "/api/score", None).await.0, StatusCode::OK);

    let (s, before) = call(&app, "GET", "/api/report?layer=human", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(String::from_utf8(before.clone()).unwrap(), cli_equivalent(&fx, b"", true));
    let (_, model_before) = call(&app, "GET", "/api/report?layer=model", None).await;

    // flip 20 diversity-image race labels to one value
    let targets: Vec<String> = fx
        .records
        .iter()
        .filter(|r| r.is_diversity() && r.race != Label::Labeled("Caucasian".into()))
        .take(20)
        .map(|r| r.image_id.clone())
        .collect();
    for id in &targets {
        let (s, _) = call(&app, "POST", "/api/corrections", Some(correction(id, "race", json!("Caucasian")))).await;
        assert_eq!(s, StatusCode::CREATED);
    }

    let (_, after) = call(&app, "GET", "/api/report?layer=human", None).await;
    let kl = |b: &[u8]| serde_json::from_slice::<Value>(b).unwrap()["diversity"]["score_kl"].as_f64().unwrap();
    assert!(kl(&after) < kl(&before), "{} !< {}", kl(&after), kl(&before));

    let (_, exported) = call(&app, "GET", "/api/corrections/export", None).await;
    assert_eq!(String::from_utf8(after).unwrap(), cli_equivalent(&fx, &exported, true));

    let (_, model_after) = call(&app, "GET", "/api/report?layer=model", None).await;
    assert_eq!(model_before, model_after);
    assert_eq!(call(&app, "GET", "/api/report?layer=both", None).await.0, StatusCode::BAD_REQUEST);
}

fn count_lines(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count()
}

#[tokio::test]
async fn log_survives_restart_and_replay_is_idempotent() {
    let fx = Fixture::new();
    let id = fx.records[7].image_id.clone();
    {
        let app = fx.app();
        call(&app, "POST", "/api/corrections", Some(correction(&id, "race", json!("Indian")))).await;
        call(&app, "POST", "/api/corrections", Some(correction(&id, "age", json!(50)))).await;
    }
    assert_eq!(count_lines(&fx.log_path()), 2);

    let app = fx.app();
    let (_, body) = call(&app, "GET", "/api/corrections/export", None).await;
    assert_eq!(read_corrections(&body[..]).unwrap().len(), 2);

    // the log doubled on disk, plus a torn final line
    let text = std::fs::read_to_string(fx.log_path()).unwrap();
    std::fs::write(fx.log_path(), format!("{text}{text}{{\"type\":\"corr")).unwrap();
    let app = fx.app();
    let (_, again) = call(&app, "GET", "/api/corrections/export", None).await;
    assert_eq!(again, body);
    assert!(std::fs::read_to_string(fx.log_path()).unwrap().ends_with('\n'));

    // appends after recovery land on their own line
    call(&app, "POST", "/api/corrections", Some(correction(&id, "quality", json!(1)))).await;
    let app = fx.app();
    let (_, body) = call(&app, "GET", "/api/corrections/export", None).await;
    assert_eq!(read_corrections(&body[..]).unwrap().len(), 3);
}

#[test]
fn corrupt_log_refuses_to_start() {
    let fx = Fixture::new();
    std::fs::write(fx.log_path(), "not json\n").unwrap();
    assert!(AppState::new(fx.cfg.clone(), fx.records.clone(), &fx.settings(None)).is_err());
}
