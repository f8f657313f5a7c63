use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use attrib_core::modelhub::{ModelInfo, ModelRegistry};
use attrib_core::simlm::GenerationConfig;
use attrib_core::{Error, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use crate::wire::{ErrorBody, GenerateRequest, GenerateResponse, Health};

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { code: code.into(), message: message.into() })).into_response()
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into() })
}

async fn models(State(registry): State<Arc<ModelRegistry>>) -> Json<Vec<ModelInfo>> {
    Json(registry.list())
}

async fn generate(State(registry): State<Arc<ModelRegistry>>, body: Bytes) -> Response {
    let req: GenerateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
    };
    let generator = match registry.generator(&req.model_id) {
        Ok(g) => g.clone(),
        Err(e) => return error(StatusCode::NOT_FOUND, "model_not_found", e.to_string()),
    };
    let config = GenerationConfig {
        max_tokens: req.max_tokens,
        temperature: req.temperature,
        seed: req.seed,
        ..GenerationConfig::default()
    };
    if let Err(e) = config.validate() {
        return error(StatusCode::BAD_REQUEST, "invalid_parameter", e.to_string());
    }
    let prompt = req.prompt;
    let out = tokio::task::spawn_blocking(move || {
        let start = Instant::now();
        generator
            .generate(&prompt, &config)
            .map(|g| (g.text, g.compute_micros.unwrap_or(start.elapsed().as_micros() as u64)))
    })
    .await;
    match out {
        Ok(Ok((response, latency_micros))) => {
            Json(GenerateResponse { model_id: req.model_id, response, latency_micros }).into_response()
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, "generation_failed", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "generation_failed", e.to_string()),
    }
}

pub fn router(registry: Arc<ModelRegistry>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/models", get(models))
        .route("/v1/generate", post(generate))
        .with_state(registry)
}

/// A running service on a background thread. Dropping it shuts it down.
pub struct Server {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the service stops.
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

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `bind` (port 0 picks a free port) and serves `registry` until the
/// returned handle is dropped.
pub fn serve(registry: Arc<ModelRegistry>, bind: &str) -> Result<Server> {
    if registry.is_empty() {
        return Err(Error::InvalidArgument("cannot serve an empty registry".into()));
    }
    let listener = TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_io().build()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(registry);
    let thread = std::thread::Builder::new().name("attrib-hub".into()).spawn(move || {
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(listener) {
                Ok(l) => l,
                Err(e) => {
                    log::error!("cannot adopt listener: {e}");
                    return;
                }
            };
            let stop = async {
                let _ = rx.await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(stop).await {
                log::error!("server stopped: {e}");
            }
        });
    })?;
    log::info!("serving on http://{addr}");
    Ok(Server { addr, shutdown: Some(tx), thread: Some(thread) })
}
