//! JSON API: compile chunks into cache ids, complete over any mix of cached
//! and literal segments, expire ids.

mod error;
mod routes;

use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{Request, State};
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{delete, post};
use axum::Router;
use pic_core::{KvStore, Weights};
use serde_json::json;

pub use error::ApiError;
pub use routes::{CompileRequest, CompileResponse, CompletionRequest, CompletionResponse, ExpireResponse, Message};

/// Where the one-JSON-line-per-request log goes.
pub type LogSink = Arc<Mutex<Box<dyn Write + Send>>>;

#[derive(Clone)]
pub struct AppState {
    pub weights: Arc<Weights>,
    pub store: Arc<KvStore>,
    pub log: Option<LogSink>,
}

impl AppState {
    pub fn new(weights: Weights, store: KvStore) -> Self {
        Self { weights: Arc::new(weights), store: Arc::new(store), log: None }
    }

    pub fn with_log(mut self, sink: impl Write + Send + 'static) -> Self {
        self.log = Some(Arc::new(Mutex::new(Box::new(sink))));
        self
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/context_cache", post(routes::create_cache))
        .route("/v1/context_cache/{id}", delete(routes::expire_cache))
        .route("/v1/chat/completions", post(routes::chat_completion))
        .layer(middleware::from_fn_with_state(state.clone(), log_request))
        .with_state(state)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn log_request(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(sink) = state.log.clone() else {
        return next.run(req).await;
    };
    let method = req.method().to_string();
    let path = req.uri().path().to_owned();
    let start = Instant::now();
    let resp = next.run(req).await;
    let line = json!({
        "method": method,
        "path": path,
        "status": resp.status().as_u16(),
        "elapsed_ms": start.elapsed().as_secs_f64() * 1e3,
    });
    if let Ok(mut w) = sink.lock() {
        let _ = writeln!(w, "{line}");
        let _ = w.flush();
    }
    resp
}
