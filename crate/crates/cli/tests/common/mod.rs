#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request};
use fairscope_core::config::Config;
use fairscope_server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn fairscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairscope"))
        .args(args)
        .output()
        .expect("spawn fairscope")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn schema_errors(report: &Value) -> Vec<String> {
    let schema: Value = serde_json::from_str(fairscope_core::session::REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    validator.iter_errors(report).map(|e| e.to_string()).collect()
}

/// Session settings mirrored by a CLI `report` run.
pub struct SessionPlan<'a> {
    pub target: &'a str,
    pub positive: &'a str,
    pub sensitive: &'a [(&'a str, Option<&'a [&'a str]>)],
    pub metrics: &'a [&'a str],
    pub seed: u64,
}

async fn call(app: &axum::Router, req: Request<Body>) -> Result<String, String> {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    if status.is_success() {
        Ok(text)
    } else {
        Err(format!("{status}: {text}"))
    }
}

fn json_req(method: Method, uri: &str, body: Value) -> Request<Body> {
    Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

/// Drive an in-process API session through the wizard and return the raw
/// body of its report export.
pub fn api_report(csv: &str, plan: &SessionPlan<'_>, data_dir: &Path) -> Result<String, String> {
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let config = Config {
            data_dir: data_dir.to_path_buf(),
            ..Config::default()
        };
        let app = router(Arc::new(AppState::new(config)));
        let created = call(
            &app,
            json_req(Method::POST, "/api/v1/sessions", json!({"role": "data_scientist"})),
        )
        .await?;
        let id = serde_json::from_str::<Value>(&created).unwrap()["id"]
            .as_str()
            .unwrap()
            .to_string();
        let base = format!("/api/v1/sessions/{id}");
        let upload = Request::post(format!("{base}/dataset?name=data.csv"))
            .header(header::CONTENT_TYPE, "text/csv")
            .body(Body::from(csv.to_string()))
            .unwrap();
        call(&app, upload).await?;
        let target = json!({"feature": plan.target, "positive": plan.positive});
        call(&app, json_req(Method::PUT, &format!("{base}/target"), target)).await?;
        call(&app, json_req(Method::PUT, &format!("{base}/model"), json!({"l2": Config::default().l2}))).await?;
        let features: Vec<Value> = plan
            .sensitive
            .iter()
            .map(|(f, p)| json!({"feature": f, "privileged": p}))
            .collect();
        call(&app, json_req(Method::PUT, &format!("{base}/sensitive"), json!({"features": features}))).await?;
        call(&app, json_req(Method::PUT, &format!("{base}/metrics"), json!({"kinds": plan.metrics}))).await?;
        call(&app, json_req(Method::POST, &format!("{base}/train"), json!({"seed": plan.seed}))).await?;
        call(&app, Request::get(format!("{base}/report")).body(Body::empty()).unwrap()).await
    })
}
