use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{FromRequest, FromRequestParts, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use fairscope_core::data::Constraint;
use fairscope_core::metrics::{MetricKind, View};
use fairscope_core::session::{
    render_text, report_json, CustomMetricInput, DatasetQuery, ModelSpec, Role, SensitiveInput,
    SessionState, WizardStatus, REPORT_SCHEMA,
};
use fairscope_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{body_error, ApiError, ApiResult};
use crate::state::{AppState, JobInfo, JobKind, SessionHandle};

type App = State<Arc<AppState>>;

#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct ApiJson<T>(pub T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
pub struct ApiQuery<T>(pub T);

#[derive(Debug, Default, Deserialize)]
pub struct ViewQuery {
    view: Option<View>,
}

impl ViewQuery {
    fn view(&self) -> View {
        self.view.unwrap_or(View::Dataset)
    }
}

// ---- helpers ----

async fn read<T>(handle: &SessionHandle, f: impl FnOnce(&SessionState) -> fairscope_core::Result<T>) -> ApiResult<T> {
    let s = handle.state.read().await;
    Ok(f(&s)?)
}

/// Apply one mutation under the session's write lock and persist the result.
async fn mutate<T>(
    app: &AppState,
    handle: &SessionHandle,
    f: impl FnOnce(&mut SessionState) -> fairscope_core::Result<T>,
) -> ApiResult<T> {
    let mut s = handle.state.write().await;
    let out = f(&mut s)?;
    app.persist(handle, &s)?;
    Ok(out)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> fairscope_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

/// Learn the graph outside the lock if the cached one is stale.
pub async fn ensure_graph(app: &AppState, handle: &SessionHandle) -> ApiResult<()> {
    for _ in 0..3 {
        let job = {
            let s = handle.state.read().await;
            if s.graph_is_current() {
                return Ok(());
            }
            s.graph_job()?
        };
        let graph = blocking(move || job.run()).await?;
        let mut s = handle.state.write().await;
        if s.install_graph(graph) {
            app.persist(handle, &s)?;
            return Ok(());
        }
    }
    Err(Error::State("session inputs kept changing while the graph was computed".into()).into())
}

/// Train outside the lock, then install if the inputs are unchanged.
pub async fn train(app: &AppState, handle: &SessionHandle, seed: u64) -> ApiResult<u64> {
    let job = handle.state.read().await.model_job(seed)?;
    let model = blocking(move || job.run()).await?;
    mutate(app, handle, |s| s.install_model(model)).await
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn version(v: u64) -> Json<Value> {
    Json(json!({ "version": v }))
}

// ---- sessions and wizard ----

pub async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub async fn report_schema() -> Response {
    json_text(REPORT_SCHEMA.to_string())
}

#[derive(Deserialize)]
pub struct CreateSession {
    role: Role,
}

pub async fn list_sessions(State(app): App) -> Json<Value> {
    Json(json!({ "sessions": app.ids() }))
}

pub async fn create_session(
    State(app): App,
    ApiJson(req): ApiJson<CreateSession>,
) -> ApiResult<(StatusCode, Json<WizardStatus>)> {
    let handle = app.create(req.role)?;
    let status = handle.state.read().await.wizard();
    Ok((StatusCode::CREATED, Json(status)))
}

pub async fn delete_session(State(app): App, Path(id): Path<String>) -> ApiResult<StatusCode> {
    app.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize)]
pub struct SessionSummary {
    #[serde(flatten)]
    wizard: WizardStatus,
    target: Option<fairscope_core::session::TargetSpec>,
    model_spec: Option<ModelSpec>,
    sensitive: Vec<fairscope_core::session::SensitiveFeature>,
    metrics: Vec<MetricKind>,
    custom_metrics: Vec<fairscope_core::expr::CustomMetricDef>,
    flagged_features: Vec<String>,
    flagged_cards: Vec<String>,
    combinations: Vec<fairscope_core::subgroup::Combination>,
    selected: Option<usize>,
    model_trained: bool,
    graph_current: bool,
}

pub async fn get_session(State(app): App, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let handle = app.get(&id)?;
    let s = handle.state.read().await;
    Ok(Json(SessionSummary {
        wizard: s.wizard(),
        target: s.target().cloned(),
        model_spec: s.model_spec().cloned(),
        sensitive: s.sensitive().to_vec(),
        metrics: s.metrics().to_vec(),
        custom_metrics: s.custom_metrics().to_vec(),
        flagged_features: s.flagged_features().iter().cloned().collect(),
        flagged_cards: s.flagged_cards().iter().cloned().collect(),
        combinations: s.combinations().to_vec(),
        selected: s.selected(),
        model_trained: s.model().is_some(),
        graph_current: s.graph_is_current(),
    }))
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetRequest {
    Synth { seed: u64, rows: usize },
    Csv { name: Option<String>, content: String },
}

#[derive(Deserialize)]
pub struct UploadName {
    name: Option<String>,
}

/// Either a raw `text/csv` body or a JSON [`DatasetRequest`].
pub async fn set_dataset(
    State(app): App,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<UploadName>,
    headers: HeaderMap,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Json<WizardStatus>> {
    let handle = app.get(&id)?;
    let body = body.map_err(|r| body_error(r.status(), r.body_text()))?;
    let is_csv = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("text/csv"));
    let req = if is_csv {
        DatasetRequest::Csv {
            name: q.name,
            content: String::from_utf8(body.to_vec())
                .map_err(|_| Error::Validation("CSV body is not valid UTF-8".into()))?,
        }
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?
    };
    let status = mutate(&app, &handle, |s| {
        match req {
            DatasetRequest::Synth { seed, rows } => s.load_synth(seed, rows)?,
            DatasetRequest::Csv { name, content } => s.load_dataset_csv(content.as_bytes(), name)?,
        };
        Ok(s.wizard())
    })
    .await?;
    Ok(Json(status))
}

#[derive(Deserialize)]
pub struct TargetRequest {
    feature: String,
    positive: String,
}

pub async fn set_target(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<TargetRequest>,
) -> ApiResult<Json<WizardStatus>> {
    let handle = app.get(&id)?;
    let status = mutate(&app, &handle, |s| {
        s.set_target(&req.feature, &req.positive)?;
        Ok(s.wizard())
    })
    .await?;
    Ok(Json(status))
}

pub async fn set_model(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(spec): ApiJson<ModelSpec>,
) -> ApiResult<Json<WizardStatus>> {
    let handle = app.get(&id)?;
    let status = mutate(&app, &handle, |s| {
        s.set_model(spec)?;
        Ok(s.wizard())
    })
    .await?;
    Ok(Json(status))
}

#[derive(Deserialize)]
pub struct SensitiveRequest {
    features: Vec<SensitiveInput>,
}

pub async fn set_sensitive(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SensitiveRequest>,
) -> ApiResult<Json<WizardStatus>> {
    let handle = app.get(&id)?;
    let status = mutate(&app, &handle, |s| {
        s.set_sensitive(&req.features)?;
        Ok(s.wizard())
    })
    .await?;
    Ok(Json(status))
}

#[derive(Deserialize)]
pub struct MetricsRequest {
    #[serde(default)]
    kinds: Vec<MetricKind>,
    #[serde(default)]
    custom: Vec<CustomMetricInput>,
}

pub async fn set_metrics(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<MetricsRequest>,
) -> ApiResult<Json<WizardStatus>> {
    let handle = app.get(&id)?;
    let status = mutate(&app, &handle, |s| {
        s.set_metrics(&req.kinds, &req.custom)?;
        Ok(s.wizard())
    })
    .await?;
    Ok(Json(status))
}

// ---- reads ----

pub async fn overview(State(app): App, Path(id): Path<String>, ApiQuery(q): ApiQuery<ViewQuery>) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let o = read(&handle, |s| s.overview(q.view())).await?;
    Ok(Json(o).into_response())
}

#[derive(Deserialize)]
pub struct GraphQuery {
    view: Option<View>,
    /// Comma-separated drill-down selection.
    features: Option<String>,
}

pub async fn graph(State(app): App, Path(id): Path<String>, ApiQuery(q): ApiQuery<GraphQuery>) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    read(&handle, |s| s.require_ready()).await?;
    ensure_graph(&app, &handle).await?;
    let keep: Option<Vec<String>> = q.features.as_ref().map(|f| {
        f.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(String::from)
            .collect()
    });
    let g = read(&handle, |s| s.graph_view(q.view.unwrap_or(View::Dataset), keep.as_deref())).await?;
    Ok(Json(g).into_response())
}

pub async fn feature_info(
    State(app): App,
    Path((id, feature)): Path<(String, String)>,
    ApiQuery(q): ApiQuery<ViewQuery>,
) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    read(&handle, |s| s.require_ready()).await?;
    ensure_graph(&app, &handle).await?;
    let info = read(&handle, |s| s.feature_info(&feature, q.view())).await?;
    Ok(Json(info).into_response())
}

#[derive(Deserialize)]
pub struct PairQuery {
    a: String,
    b: String,
    view: Option<View>,
}

pub async fn relationship(State(app): App, Path(id): Path<String>, ApiQuery(q): ApiQuery<PairQuery>) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    read(&handle, |s| s.require_ready()).await?;
    ensure_graph(&app, &handle).await?;
    let r = read(&handle, |s| s.relationship(&q.a, &q.b, q.view.unwrap_or(View::Dataset))).await?;
    Ok(Json(r).into_response())
}

pub async fn combinations(State(app): App, Path(id): Path<String>, ApiQuery(q): ApiQuery<ViewQuery>) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let cards = read(&handle, |s| s.cards(q.view())).await?;
    Ok(Json(json!({ "view": q.view(), "cards": cards })).into_response())
}

#[derive(Deserialize)]
pub struct RowsRequest {
    #[serde(default)]
    view: Option<View>,
    #[serde(flatten)]
    query: DatasetQuery,
}

pub async fn rows(State(app): App, Path(id): Path<String>, ApiJson(req): ApiJson<RowsRequest>) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let page = read(&handle, |s| s.dataset_page(req.view.unwrap_or(View::Dataset), &req.query)).await?;
    Ok(Json(page).into_response())
}

pub async fn application(
    State(app): App,
    Path((id, row)): Path<(String, usize)>,
    ApiQuery(q): ApiQuery<ViewQuery>,
) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let a = read(&handle, |s| s.application(row, q.view())).await?;
    Ok(Json(a).into_response())
}

pub async fn scatter(
    State(app): App,
    Path((id, row)): Path<(String, usize)>,
    ApiQuery(q): ApiQuery<ViewQuery>,
) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let sc = read(&handle, |s| s.scatter(row, q.view())).await?;
    Ok(Json(sc).into_response())
}

#[derive(Deserialize)]
pub struct CompareQuery {
    a: usize,
    b: usize,
}

pub async fn compare(State(app): App, Path(id): Path<String>, ApiQuery(q): ApiQuery<CompareQuery>) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let c = read(&handle, |s| s.compare(q.a, q.b)).await?;
    Ok(Json(c).into_response())
}

#[derive(Deserialize)]
pub struct ReportQuery {
    format: Option<String>,
}

pub async fn report(State(app): App, Path(id): Path<String>, ApiQuery(q): ApiQuery<ReportQuery>) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    read(&handle, |s| s.require_ready()).await?;
    ensure_graph(&app, &handle).await?;
    let r = read(&handle, |s| s.report()).await?;
    match q.format.as_deref() {
        None | Some("json") => Ok(json_text(report_json(&r)?)),
        Some("text") => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], render_text(&r)).into_response()),
        Some(other) => Err(Error::Validation(format!("unknown report format `{other}`; expected json or text")).into()),
    }
}

// ---- mutations ----

#[derive(Deserialize)]
pub struct SensitiveToggle {
    sensitive: bool,
    #[serde(default)]
    privileged: Option<Vec<String>>,
}

pub async fn toggle_sensitive(
    State(app): App,
    Path((id, feature)): Path<(String, String)>,
    ApiJson(req): ApiJson<SensitiveToggle>,
) -> ApiResult<Json<Value>> {
    let handle = app.get(&id)?;
    let v = mutate(&app, &handle, |s| s.set_feature_sensitive(&feature, req.sensitive, req.privileged)).await?;
    Ok(version(v))
}

#[derive(Deserialize)]
pub struct FlagRequest {
    unfair: bool,
}

pub async fn flag_feature(
    State(app): App,
    Path((id, feature)): Path<(String, String)>,
    ApiJson(req): ApiJson<FlagRequest>,
) -> ApiResult<Json<Value>> {
    let handle = app.get(&id)?;
    let v = mutate(&app, &handle, |s| s.flag_feature(&feature, req.unfair)).await?;
    Ok(version(v))
}

pub async fn flag_card(
    State(app): App,
    Path((id, card)): Path<(String, String)>,
    ApiJson(req): ApiJson<FlagRequest>,
) -> ApiResult<Json<Value>> {
    let handle = app.get(&id)?;
    let v = mutate(&app, &handle, |s| s.flag_card(&card, req.unfair)).await?;
    Ok(version(v))
}

#[derive(Deserialize)]
pub struct CombinationRequest {
    constraints: Vec<Constraint>,
}

pub async fn add_combination(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<CombinationRequest>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let handle = app.get(&id)?;
    let (c, v) = mutate(&app, &handle, |s| s.add_combination(req.constraints)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "version": v, "combination": c }))))
}

pub async fn remove_combination(
    State(app): App,
    Path((id, card)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let handle = app.get(&id)?;
    let v = mutate(&app, &handle, |s| s.remove_combination(&card)).await?;
    Ok(version(v))
}

pub async fn add_custom_metric(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<CustomMetricInput>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let handle = app.get(&id)?;
    let v = mutate(&app, &handle, |s| s.add_custom_metric(&req)).await?;
    Ok((StatusCode::CREATED, version(v)))
}

#[derive(Deserialize)]
pub struct SelectRequest {
    row: Option<usize>,
}

pub async fn select(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SelectRequest>,
) -> ApiResult<Json<Value>> {
    let handle = app.get(&id)?;
    let v = mutate(&app, &handle, |s| s.select_application(req.row)).await?;
    Ok(version(v))
}

#[derive(Deserialize, Default)]
pub struct TrainRequest {
    #[serde(default)]
    seed: u64,
}

pub async fn train_model(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<TrainRequest>,
) -> ApiResult<Json<Value>> {
    let handle = app.get(&id)?;
    let v = train(&app, &handle, req.seed).await?;
    Ok(version(v))
}

// ---- jobs ----

#[derive(Deserialize)]
pub struct JobRequest {
    kind: JobKind,
    #[serde(default)]
    seed: u64,
}

pub async fn start_job(
    State(app): App,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<JobRequest>,
) -> ApiResult<(StatusCode, Json<JobInfo>)> {
    let handle = app.get(&id)?;
    // Reject jobs that cannot start before queueing them.
    match req.kind {
        JobKind::Graph => read(&handle, |s| s.graph_job().map(drop)).await?,
        JobKind::Train => read(&handle, |s| s.model_job(req.seed).map(drop)).await?,
    }
    let info = handle.start_job(req.kind);
    let job_id = info.id;
    let (app2, handle2) = (app.clone(), handle.clone());
    tokio::spawn(async move {
        let outcome = match req.kind {
            JobKind::Graph => ensure_graph(&app2, &handle2).await.map(|_| None),
            JobKind::Train => train(&app2, &handle2, req.seed).await.map(Some),
        };
        handle2.finish_job(job_id, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(info)))
}

pub async fn job_status(
    State(app): App,
    Path((id, job)): Path<(String, u64)>,
) -> ApiResult<Json<JobInfo>> {
    let handle = app.get(&id)?;
    handle
        .job(job)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("job {job}")))
}

pub async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}
