use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use super::wire::{values_from_attributes, PredictRequest, WireResponse};
use super::{OracleError, PredictionResponse};
use crate::models::TargetModel;

struct AppState {
    model: Arc<TargetModel>,
    expose_scores: bool,
}

/// A running prediction server. Dropping the handle shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(serde_json::json!({ "error": message }))).into_response()
}

async fn predict(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Response {
    let Json(request) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let schema = state.model.schema();
    let values = match values_from_attributes(schema, &request.attributes) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let model = state.model.clone();
    let expose = state.expose_scores;
    let p = match tokio::task::spawn_blocking(move || model.predict(&values)).await {
        Ok(p) => p,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let response = PredictionResponse {
        label: p.label,
        confidence: p.confidence(),
        scores: expose.then_some(p.scores),
    };
    Json(WireResponse::from_prediction(
        state.model.labels(),
        &response,
    ))
    .into_response()
}

async fn schema(State(state): State<Arc<AppState>>) -> Response {
    Json(state.model.schema().clone()).into_response()
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/schema", get(schema))
        .with_state(state)
}

/// Binds `bind` (port 0 picks a free port) and serves the model on a
/// background thread.
pub fn serve(
    model: Arc<TargetModel>,
    bind: &str,
    expose_scores: bool,
) -> Result<ServerHandle, OracleError> {
    let bind_err = |source| OracleError::Bind {
        addr: bind.to_string(),
        source,
    };
    let listener = TcpListener::bind(bind).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    let addr = listener.local_addr().map_err(bind_err)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(bind_err)?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(Arc::new(AppState {
        model,
        expose_scores,
    }));
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)
                .expect("listener registers with runtime");
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
