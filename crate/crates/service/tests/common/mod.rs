#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

/// Small optimizer budgets so sessions stay quick in tests.
pub fn fast_config() -> Value {
    json!({
        "acquisition": { "optimizer": { "raw_samples": 64, "restarts": 2, "max_evals": 60, "simplex_scale": 0.05 } },
        "hyper_fit": { "starts": 2, "max_evals": 40 },
        "argmax": { "raw_samples": 64, "restarts": 2, "max_evals": 60, "simplex_scale": 0.05 },
        "grid_resolution": 5
    })
}

pub async fn create(app: &Router, lower: &[f64], upper: &[f64], method: &str, seed: u64) -> String {
    let (status, body) = call(
        app,
        Method::POST,
        "/sessions",
        Some(json!({ "lower": lower, "upper": upper, "method": method, "seed": seed, "config": fast_config() })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

pub fn point(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}
