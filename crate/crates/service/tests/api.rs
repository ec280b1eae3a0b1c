use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mind_core::scripting::ScriptPlan;
use mind_core::{Backend, Phase, SessionId, SessionStatus, TemplateSet};
use mind_service::{router, AppState, BackendFactory, ComfortResponse, SessionEvent, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn factory(plan: ScriptPlan) -> BackendFactory {
    Arc::new(move || Ok(Arc::new(plan.backend()) as Arc<dyn Backend>))
}

fn app(dir: &std::path::Path, plan: Option<ScriptPlan>) -> AppState {
    AppState::new(ServiceConfig::new(dir), Arc::new(TemplateSet::builtin()), plan.map(factory)).unwrap()
}

async fn call(router: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into())) };
    (status, value)
}

async fn create(router: &Router, id: &str) -> Value {
    let (status, body) = call(
        router,
        "POST",
        "/sessions",
        Some(json!({ "theme": "work issues", "concern": "I keep missing deadlines", "options": { "id": id } })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body
}

async fn settle(app: &AppState, id: &str) -> mind_core::SessionState {
    let id = SessionId::new(id);
    for _ in 0..500 {
        let snap = app.snapshot(&id).unwrap();
        if snap.phase == Phase::AwaitingComfort || !snap.is_active() {
            app.wait_idle(&id).await;
            return app.snapshot(&id).unwrap();
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("session never settled");
}

async fn comfort(router: &Router, id: &str, words: &str) -> (StatusCode, Value) {
    call(router, "POST", &format!("/sessions/{id}/comfort"), Some(json!({ "comforting_words": words }))).await
}

async fn events(router: &Router, id: &str, from: u64) -> Vec<SessionEvent> {
    let (status, body) = call(router, "GET", &format!("/sessions/{id}/events?from={from}&format=json"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(body).unwrap()
}

#[tokio::test]
async fn created_session_runs_agents_until_comfort_is_needed() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some(ScriptPlan::ending_at(1)));
    let r = router(app.clone());
    let body = create(&r, "s1").await;
    assert_eq!(body["id"], "s1");
    let state = settle(&app, "s1").await;
    assert_eq!(state.phase, Phase::AwaitingComfort);
    let (status, view) = call(&r, "GET", "/sessions/s1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["phase"], "AwaitingComfort");
    assert_eq!(view["driver_running"], false);
    assert!(app.store().snapshot_path(&SessionId::new("s1")).exists());
    assert!(app.store().transcript_path(&SessionId::new("s1")).exists());
}

#[tokio::test]
async fn validation_and_availability_errors() {
    let dir = tempfile::tempdir().unwrap();
    let r = router(app(dir.path(), Some(ScriptPlan::default())));
    let (status, body) = call(&r, "POST", "/sessions", Some(json!({ "theme": "space travel", "concern": "x" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("space travel"));
    let (status, _) = call(&r, "POST", "/sessions", Some(json!({ "theme": "WorkIssues", "concern": "  " }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&r, "GET", "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = comfort(&r, "nope", "hi").await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let dir2 = tempfile::tempdir().unwrap();
    let r2 = router(app(dir2.path(), None));
    let (status, _) = call(&r2, "POST", "/sessions", Some(json!({ "theme": "WorkIssues", "concern": "x" }))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, health) = call(&r2, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["backend_configured"], false);
}

#[tokio::test]
async fn comfort_completes_the_round_and_duplicates_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some(ScriptPlan::ending_at(0)));
    let r = router(app.clone());
    create(&r, "s2").await;
    settle(&app, "s2").await;
    let (status, body) = comfort(&r, "s2", "You are doing your best.").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let resp: ComfortResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.status, SessionStatus::CompletedGoal);
    let footer = resp.footer.unwrap();
    assert_eq!((footer.status, footer.rounds, footer.failure), (SessionStatus::CompletedGoal, 1, false));
    assert_eq!(resp.round.unwrap().comfort.comforting_words, "You are doing your best.");
    let (status, _) = comfort(&r, "s2", "again").await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn empty_comfort_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some(ScriptPlan::ending_at(0)));
    let r = router(app.clone());
    create(&r, "s3").await;
    settle(&app, "s3").await;
    let (status, _) = comfort(&r, "s3", "   ").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(app.snapshot(&SessionId::new("s3")).unwrap().phase, Phase::AwaitingComfort);
}

#[tokio::test]
async fn events_are_gapless_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some(ScriptPlan::ending_at(1)));
    let r = router(app.clone());
    create(&r, "s4").await;
    settle(&app, "s4").await;
    comfort(&r, "s4", "first").await;
    settle(&app, "s4").await;
    let (status, _) = comfort(&r, "s4", "second").await;
    assert_eq!(status, StatusCode::OK);
    let all = events(&r, "s4", 0).await;
    let seqs: Vec<u64> = all.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (0..all.len() as u64).collect::<Vec<_>>());
    assert_eq!(all.len(), 11);
    assert_eq!(all.last().unwrap().kind.as_str(), "SessionEnded");
    let tail = events(&r, "s4", 6).await;
    assert_eq!(tail, all[6..].to_vec());
    let last = events(&r, "s4", all.len() as u64 - 1).await;
    assert_eq!(last.len(), 1);
    assert_eq!(last[0].kind.as_str(), "SessionEnded");
}

#[tokio::test]
async fn sse_stream_replays_from_last_event_id_and_closes_after_end() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some(ScriptPlan::ending_at(0)));
    let r = router(app.clone());
    create(&r, "s5").await;
    settle(&app, "s5").await;
    comfort(&r, "s5", "there there").await;
    let req = Request::builder().uri("/sessions/s5/events").header("last-event-id", "3").body(Body::empty()).unwrap();
    let resp = r.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let text = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    let ids: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("id: ")).collect();
    assert_eq!(ids, ["4", "5"]);
    assert!(text.contains("event: SessionEnded"));
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = app(dir.path(), Some(ScriptPlan::ending_at(2)));
        let r = router(app.clone());
        create(&r, "s6").await;
        settle(&app, "s6").await;
        comfort(&r, "s6", "hang in there").await;
        settle(&app, "s6").await;
    }
    let reloaded = app(dir.path(), Some(ScriptPlan::ending_at(2)));
    let before = reloaded.snapshot(&SessionId::new("s6")).unwrap();
    assert_eq!((before.rounds.len(), before.phase), (1, Phase::AwaitingComfort));
    let r = router(reloaded.clone());
    let (_, list) = call(&r, "GET", "/sessions", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    let (status, _) = comfort(&r, "s6", "still here").await;
    assert_eq!(status, StatusCode::OK);
    let after = settle(&reloaded, "s6").await;
    assert_eq!(after.rounds.len(), 2);
    assert_eq!(after.phase, Phase::AwaitingComfort);
}

#[tokio::test]
async fn version_reports_the_template_set() {
    let dir = tempfile::tempdir().unwrap();
    let r = router(app(dir.path(), None));
    let (status, body) = call(&r, "GET", "/version", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["template_set"], TemplateSet::builtin().id());
}
