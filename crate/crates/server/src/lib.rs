//! HTTP API over fairscope sessions. All endpoints live under `/api/v1`;
//! errors are JSON `{code, message, detail}`.

mod error;
mod routes;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post, put};
use axum::Router;
use fairscope_core::config::Config;

pub use error::{ApiError, ErrorBody};
pub use state::{AppState, JobInfo, JobKind, JobStatus};

/// Build the API router over `state`.
pub fn router(state: Arc<AppState>) -> Router {
    use routes::*;
    let limit = state.config.max_upload_bytes;
    let session = Router::new()
        .route("/", get(get_session).delete(delete_session))
        .route("/dataset", post(set_dataset))
        .route("/target", put(set_target))
        .route("/model", put(set_model))
        .route("/sensitive", put(set_sensitive))
        .route("/metrics", put(set_metrics))
        .route("/overview", get(overview))
        .route("/graph", get(graph))
        .route("/features/{feature}", get(feature_info))
        .route("/features/{feature}/sensitive", put(toggle_sensitive))
        .route("/features/{feature}/flag", put(flag_feature))
        .route("/relationship", get(relationship))
        .route("/combinations", get(combinations).post(add_combination))
        .route("/combinations/{card}", axum::routing::delete(remove_combination))
        .route("/combinations/{card}/flag", put(flag_card))
        .route("/rows", post(rows))
        .route("/applications/{row}", get(application))
        .route("/scatter/{row}", get(scatter))
        .route("/compare", get(compare))
        .route("/custom-metrics", post(add_custom_metric))
        .route("/selection", put(select))
        .route("/train", post(train_model))
        .route("/jobs", post(start_job))
        .route("/jobs/{job}", get(job_status))
        .route("/report", get(report));
    let api = Router::new()
        .route("/health", get(health))
        .route("/schema/report", get(report_schema))
        .route("/sessions", get(list_sessions).post(create_session))
        .nest("/sessions/{id}", session);
    Router::new()
        .nest("/api/v1", api)
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Restore persisted sessions and serve on `127.0.0.1:{port}` until Ctrl-C.
pub async fn serve(config: Config) -> fairscope_core::Result<()> {
    let state = Arc::new(AppState::new(config));
    let restored = state.load_persisted()?;
    let addr = SocketAddr::from(([127, 0, 0, 1], state.config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!(
        "fairscope listening on http://{} ({restored} sessions restored)",
        listener.local_addr()?
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
