use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use convrec::catalog::Strategy;
use convrec::elicitation::ElicitOptions;
use convrec::model::{Model, ModelChoice};
use convrec::service::{router, AppState, EventStore};
use convrec::toy::{TOY_CATALOG, TOY_PROPERTY_CATALOG};
use convrec::{Catalog, LoadOptions};

fn ujs_model() -> Arc<Model> {
    let c = Arc::new(Catalog::from_json_str(TOY_CATALOG, &LoadOptions::default()).unwrap());
    Arc::new(Model::build(c, ModelChoice::PropertyFree, &ElicitOptions::forced(Strategy::Ujs)).unwrap())
}

async fn call(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn prob(items: &Value, id: &str) -> Option<f64> {
    items
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["id"] == id)
        .map(|r| r["probability"].as_f64().unwrap())
}

fn assert_normalized(items: &Value, complete: bool) {
    let total: f64 = items.as_array().unwrap().iter().map(|r| r["probability"].as_f64().unwrap()).sum();
    if complete {
        assert!((total - 1.0).abs() < 1e-12, "sum {total}");
    } else {
        assert!(total <= 1.0 + 1e-12);
    }
}

#[tokio::test]
async fn wedding_answer_leaves_dj_and_band() {
    let app = router(Arc::new(AppState::new(ujs_model())));
    let (status, created) = call(&app, Method::POST, "/sessions", Some(json!({"questions": ["Q2"]}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(created["question"]["id"], "Q2");
    assert_eq!(created["question"]["answers"].as_array().unwrap().len(), 4);
    let id = created["session_id"].as_str().unwrap();

    let (status, view) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/answers"),
        Some(json!({"question_id": "Q2", "answer_id": "wedding"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["nri"], 2);
    assert_eq!(view["answered"], 1);
    let recs = &view["recommendations"];
    assert!((prob(recs, "i1").unwrap() - 0.5).abs() < 1e-12);
    assert!((prob(recs, "i2").unwrap() - 0.5).abs() < 1e-12);
    assert_normalized(recs, true);
    assert_eq!(view["status"], "stopped");
    assert_eq!(view["stop_reason"], "exhausted");
}

#[tokio::test]
async fn fresh_session_recommendations() {
    let app = router(Arc::new(AppState::new(ujs_model())));
    let (_, created) = call(&app, Method::POST, "/sessions", Some(json!({}))).await;
    assert_eq!(created["question"]["id"], "Q1");
    let id = created["session_id"].as_str().unwrap();

    let (status, top) = call(&app, Method::GET, &format!("/sessions/{id}/recommendations?k=1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(top["interim"], true);
    let items = top["items"].as_array().unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0]["id"], "i1");
    assert!((items[0]["probability"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let (_, all) = call(&app, Method::GET, &format!("/sessions/{id}/recommendations?k=10"), None).await;
    assert_eq!(all["items"].as_array().unwrap().len(), 3);
    assert_normalized(&all["items"], true);
    // ties broken by id
    assert_eq!(all["items"][1]["id"], "i2");

    let (status, next) = call(&app, Method::GET, &format!("/sessions/{id}/next-question"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(next["question"]["id"], "Q1");
}

#[tokio::test]
async fn stop_contract_and_config_errors() {
    let app = router(Arc::new(AppState::new(ujs_model())));
    let (status, err) = call(&app, Method::POST, "/sessions", Some(json!({"stop_s": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "invalid_config");
    let (status, _) = call(&app, Method::POST, "/sessions", Some(json!({"stop_s": 4}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, done) = call(&app, Method::POST, "/sessions", Some(json!({"stop_s": 3}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(done["status"], "stopped");
    assert!(done["question"].is_null());
    assert_eq!(done["recommendations"].as_array().unwrap().len(), 3);

    let (_, s1) = call(&app, Method::POST, "/sessions", Some(json!({"stop_s": 1}))).await;
    let id = s1["session_id"].as_str().unwrap();
    let (_, fin) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/answers"),
        Some(json!({"question_id": "Q1", "answer_id": "dj"})),
    )
    .await;
    assert_eq!(fin["status"], "stopped");
    assert_eq!(fin["stop_reason"], "threshold");
    assert_eq!(fin["recommendations"][0]["id"], "i1");
    assert_eq!(fin["recommendations"][0]["probability"], 1.0);

    let (status, err) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/answers"),
        Some(json!({"question_id": "Q2", "answer_id": "wedding"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "session_finished");
}

#[tokio::test]
async fn protocol_errors() {
    let app = router(Arc::new(AppState::new(ujs_model())));
    let (_, created) = call(&app, Method::POST, "/sessions", Some(json!({}))).await;
    let id = created["session_id"].as_str().unwrap();
    let answers = format!("/sessions/{id}/answers");

    let (status, err) = call(&app, Method::POST, &answers, Some(json!({"question_id": "Q2", "answer_id": "wedding"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "stale_question");

    let (status, err) = call(&app, Method::POST, &answers, Some(json!({"question_id": "Q1", "answer_id": "harp"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "unknown_answer");

    let missing = "00000000-0000-4000-8000-000000000000";
    let (status, err) = call(&app, Method::GET, &format!("/sessions/{missing}/recommendations"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "unknown_session");
    let (status, _) = call(&app, Method::GET, "/sessions/not-a-uuid/next-question", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn contradiction_keeps_frozen_posterior() {
    let app = router(Arc::new(AppState::new(ujs_model())));
    let (_, created) = call(&app, Method::POST, "/sessions", Some(json!({"questions": ["Q2", "Q1"], "mode": "strict"}))).await;
    let id = created["session_id"].as_str().unwrap();
    let answers = format!("/sessions/{id}/answers");
    assert_eq!(created["question"]["id"], "Q1");
    let (_, v) = call(&app, Method::POST, &answers, Some(json!({"question_id": "Q1", "answer_id": "band"}))).await;
    assert_eq!(v["status"], "active");
    assert_eq!(v["question"]["id"], "Q2");
    let (_, v) = call(&app, Method::POST, &answers, Some(json!({"question_id": "Q2", "answer_id": "birthday"}))).await;
    assert_eq!(v["status"], "contradiction");
    assert_eq!(v["contradiction"], true);
    assert_eq!(v["stop_reason"], "contradiction");

    let (_, recs) = call(&app, Method::GET, &format!("/sessions/{id}/recommendations?k=3"), None).await;
    assert_eq!(recs["contradiction"], true);
    assert_eq!(recs["interim"], false);
    assert_normalized(&recs["items"], true);
}

#[tokio::test]
async fn restart_replays_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let c = Arc::new(Catalog::from_json_str(TOY_PROPERTY_CATALOG, &LoadOptions::default()).unwrap());
    let model = Arc::new(Model::build(c, ModelChoice::Properties, &ElicitOptions::default()).unwrap());

    let (active, stopped, before_active, before_stopped) = {
        let state = Arc::new(AppState::with_store(model.clone(), EventStore::open(&path).unwrap()).unwrap());
        let app = router(state.clone());
        let (_, a) = call(&app, Method::POST, "/sessions", Some(json!({"questions": ["Q2", "Q1"]}))).await;
        let a_id = a["session_id"].as_str().unwrap().to_string();
        let q = a["question"]["id"].as_str().unwrap();
        let ans = if q == "Q1" { "dj" } else { "wedding" };
        call(&app, Method::POST, &format!("/sessions/{a_id}/answers"), Some(json!({"question_id": q, "answer_id": ans}))).await;

        let (_, b) = call(&app, Method::POST, "/sessions", Some(json!({"stop_s": 1}))).await;
        let b_id = b["session_id"].as_str().unwrap().to_string();
        let mut view = b;
        while view["status"] == "active" {
            let q = view["question"]["id"].as_str().unwrap().to_string();
            let ans = if q == "Q1" { "dj" } else { "birthday" };
            view = call(&app, Method::POST, &format!("/sessions/{b_id}/answers"), Some(json!({"question_id": q, "answer_id": ans})))
                .await
                .1;
        }
        let ua = state.session(&a_id.parse().unwrap()).unwrap();
        let ub = state.session(&b_id.parse().unwrap()).unwrap();
        (a_id, b_id, ua, ub)
    };

    let restored = Arc::new(AppState::with_store(model, EventStore::open(&path).unwrap()).unwrap());
    let after_active = restored.session(&active.parse().unwrap()).unwrap();
    let after_stopped = restored.session(&stopped.parse().unwrap()).unwrap();
    assert_eq!(after_active.state, before_active.state);
    assert_eq!(after_active.pending, before_active.pending);
    assert_eq!(after_active.status, before_active.status);
    assert_eq!(after_stopped.state, before_stopped.state);
    assert_eq!(after_stopped.status, before_stopped.status);
    assert_eq!(after_stopped.stop_reason, before_stopped.stop_reason);

    // the restored active session keeps accepting its posed question
    let app = router(restored);
    let (status, next) = call(&app, Method::GET, &format!("/sessions/{active}/next-question"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(next["status"], "active");
}

#[tokio::test]
async fn concurrent_sessions_are_independent() {
    let app = router(Arc::new(AppState::new(ujs_model())));
    let mut handles = Vec::new();
    for k in 0..16 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let (_, created) = call(&app, Method::POST, "/sessions", Some(json!({"questions": ["Q2"]}))).await;
            let id = created["session_id"].as_str().unwrap().to_string();
            let answer = ["wedding", "corporate", "birthday", "kids_party"][k % 4];
            let (_, v) = call(
                &app,
                Method::POST,
                &format!("/sessions/{id}/answers"),
                Some(json!({"question_id": "Q2", "answer_id": answer})),
            )
            .await;
            (answer, v["nri"].as_u64().unwrap())
        }));
    }
    for h in handles {
        let (_, nri) = h.await.unwrap();
        assert_eq!(nri, 2);
    }
}
