use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use coxmatch::synthetic::league_model;
use coxmatch_service::{router, AppState};

fn state(journal: Option<std::path::PathBuf>) -> Arc<AppState> {
    let mut models = HashMap::new();
    models.insert("league".to_string(), league_model("G4S5R", 33).unwrap());
    models.insert("static".to_string(), league_model("G0S0", 33).unwrap());
    Arc::new(AppState::new(models, journal))
}

fn app() -> Router {
    router(state(None))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router) -> String {
    let (status, v) = call(
        app,
        "POST",
        "/sessions",
        Some(json!({"model": "league", "home_team": "T03", "away_team": "T14", "home_value": 34.3, "away_value": 13.4, "n": 4000})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

fn goal(kind: &str, half: u8, minute: u32) -> Value {
    json!({"type": kind, "half": half, "minute": minute, "stoppage_offset": 0})
}

#[tokio::test]
async fn create_returns_a_fresh_session() {
    let app = app();
    let (status, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"model": "league", "home_team": "T01", "away_team": "T02", "home_value": 49.0, "away_value": 43.0})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["state"]["clock"], 0.0);
    assert_eq!(v["log_length"], 0);
    assert_eq!(v["default_n"], 20_000);
}

#[tokio::test]
async fn unknown_team_is_unprocessable() {
    let app = app();
    let (status, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"model": "league", "home_team": "T01", "away_team": "Nowhere FC", "home_value": 1.0, "away_value": 1.0})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "unknown_team");
    assert!(v["message"].as_str().unwrap().contains("Nowhere FC"));
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"model": "nope", "home_team": "T01", "away_team": "T02"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "unknown_model");
}

#[tokio::test]
async fn duplicate_creates_are_independent() {
    let app = app();
    let a = create(&app).await;
    let b = create(&app).await;
    assert_ne!(a, b);
    let (s, _) = call(&app, "POST", &format!("/sessions/{a}/events"), Some(goal("home_goal", 1, 10))).await;
    assert_eq!(s, StatusCode::OK);
    let (_, vb) = call(&app, "GET", &format!("/sessions/{b}"), None).await;
    assert_eq!(vb["state"]["home_goals"], 0);
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let app = app();
    for uri in ["/sessions/123/history", "/sessions/00000000-0000-0000-0000-000000000000/forecast"] {
        let (status, v) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(v["code"], "unknown_session");
    }
}

#[tokio::test]
async fn goal_in_minute_34_moves_the_clock() {
    let app = app();
    let id = create(&app).await;
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("home_goal", 1, 34))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["state"]["clock"], 33.5);
    assert_eq!(v["state"]["home_goals"], 1);
}

#[tokio::test]
async fn undo_restores_the_fresh_state() {
    let app = app();
    let id = create(&app).await;
    let (_, fresh) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("away_red", 1, 12))).await;
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, fresh);
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "empty_log");
}

#[tokio::test]
async fn time_rules() {
    let app = app();
    let id = create(&app).await;
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/clock"), Some(json!({"half": 1, "minute": 30}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/clock"), Some(json!({"half": 1, "minute": 20}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], "time_regression");
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("home_goal", 1, 25))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    // second half before the first-half stoppage is announced
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("home_goal", 2, 3))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_event");
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/stoppage"), Some(json!({"half": 1, "minutes": 2}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    call(&app, "POST", &format!("/sessions/{id}/clock"), Some(json!({"half": 1, "minute": 44}))).await;
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/stoppage"), Some(json!({"half": 1, "minutes": 2}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("home_goal", 2, 3))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state"]["clock"], 49.5);
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/events"), Some(json!({"type": "penalty"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_body");
}

async fn forecast(app: &Router, id: &str, query: &str) -> Value {
    let (s, v) = call(app, "GET", &format!("/sessions/{id}/forecast?{query}"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v
}

fn p(v: &Value, key: &str) -> f64 {
    v["result_probs"][key].as_f64().unwrap()
}

#[tokio::test]
async fn what_if_equals_committing_the_event() {
    let app = app();
    let id = create(&app).await;
    call(&app, "POST", &format!("/sessions/{id}/clock"), Some(json!({"half": 1, "minute": 20}))).await;
    let preview = forecast(&app, &id, "seed=17&what_if=away_goal&half=1&minute=22").await;
    call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("away_goal", 1, 22))).await;
    let committed = forecast(&app, &id, "seed=17").await;
    assert_eq!(preview["distribution"], committed["distribution"]);
    assert_eq!(preview["state"], committed["state"]);
    assert_eq!(preview["seed"], 17);
}

#[tokio::test]
async fn home_red_card_lowers_home_win_probability() {
    let app = app();
    let id = create(&app).await;
    call(&app, "POST", &format!("/sessions/{id}/clock"), Some(json!({"half": 1, "minute": 30}))).await;
    let base = forecast(&app, &id, "seed=5&n=20000").await;
    let red = forecast(&app, &id, "seed=5&n=20000&what_if=home_red").await;
    assert_eq!(red["what_if"]["minute"], 31);
    assert!(p(&red, "home_win") < p(&base, "home_win"), "{} vs {}", p(&red, "home_win"), p(&base, "home_win"));
    for v in [&base, &red] {
        let total = p(v, "home_win") + p(v, "draw") + p(v, "away_win");
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[tokio::test]
async fn seeds_are_echoed_and_generated() {
    let app = app();
    let id = create(&app).await;
    let a = forecast(&app, &id, "n=100").await;
    let b = forecast(&app, &id, &format!("n=100&seed={}", a["seed"])).await;
    assert_eq!(a["distribution"], b["distribution"]);
    assert_eq!(a["n"], 100);
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/forecast?n=0"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_argument");
}

#[tokio::test]
async fn history_orders_points_and_ignores_previews() {
    let app = app();
    let id = create(&app).await;
    let (_, empty) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
    assert_eq!(empty["forecasts"].as_array().unwrap().len(), 0);
    assert_eq!(empty["events"].as_array().unwrap().len(), 0);

    forecast(&app, &id, "seed=1&n=500").await;
    call(&app, "POST", &format!("/sessions/{id}/clock"), Some(json!({"half": 1, "minute": 33}))).await;
    let before = forecast(&app, &id, "seed=2").await;
    call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("home_goal", 1, 34))).await;
    let after = forecast(&app, &id, "seed=2").await;

    let (_, h1) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
    for q in ["seed=3&what_if=away_goal", "seed=4&what_if=home_red&half=1&minute=40", "what_if=away_red"] {
        forecast(&app, &id, q).await;
    }
    let (_, h2) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
    assert_eq!(h1.to_string(), h2.to_string());

    let points = h2["forecasts"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    let clocks: Vec<f64> = points.iter().map(|p| p["clock"].as_f64().unwrap()).collect();
    assert_eq!(clocks, vec![0.0, 33.0, 33.5]);
    assert_eq!(h2["events"][0]["clock"], 33.5);

    // the goal moves the forecast far more than half a minute of play would
    let jump = p(&after, "home_win") - p(&before, "home_win");
    assert!(jump > 0.15, "jump {jump}");
    let nil_nil = |v: &Value| {
        v["distribution"]["score_counts"].as_array().unwrap().iter().any(|c| c["home"] == 0 && c["away"] == 0)
    };
    assert!(nil_nil(&before));
    assert!(!nil_nil(&after));
}

#[tokio::test]
async fn sessions_are_restored_from_their_journal() {
    let dir = tempfile_dir();
    let app = router(state(Some(dir.clone())));
    let id = create(&app).await;
    call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("home_goal", 1, 5))).await;
    call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("away_goal", 1, 9))).await;
    call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    forecast(&app, &id, "seed=8&n=300").await;
    let (_, history) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;

    let restored_state = state(Some(dir.clone()));
    assert_eq!(restored_state.restore().unwrap(), 1);
    let restored = router(restored_state);
    let (status, again) = call(&restored, "GET", &format!("/sessions/{id}/history"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, history);
    let (_, view) = call(&restored, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(view["state"]["home_goals"], 1);
    assert_eq!(view["state"]["away_goals"], 0);
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("coxmatch-journal-{}", uuid::Uuid::new_v4()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_do_not_interact() {
    let app = app();
    let mut ids = Vec::new();
    for _ in 0..6 {
        ids.push(create(&app).await);
    }
    let mut tasks = Vec::new();
    for (k, id) in ids.iter().enumerate() {
        let app = app.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            for m in 1..=(k as u32 + 1) {
                let (s, _) = call(&app, "POST", &format!("/sessions/{id}/events"), Some(goal("home_goal", 1, m * 3))).await;
                assert_eq!(s, StatusCode::OK);
                forecast(&app, &id, "n=200&seed=1").await;
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    for (k, id) in ids.iter().enumerate() {
        let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        assert_eq!(v["state"]["home_goals"], k as u64 + 1);
        let (_, h) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
        assert_eq!(h["forecasts"].as_array().unwrap().len(), k + 1);
    }
}
