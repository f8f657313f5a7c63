//! Serving a [`ModelRegistry`] over HTTP and querying it back.
//!
//! Endpoints:
//!
//! - `POST /v1/generate` `{model_id, prompt, max_tokens, temperature, seed}`
//!   → `{model_id, response, latency_micros}`
//! - `GET /v1/models` → `[{model_id, role}]`
//! - `GET /v1/health` → `{status: "ok"}`
//!
//! Errors carry `{code, message}` with `code` one of `bad_request`,
//! `model_not_found`, `invalid_parameter` or `generation_failed`.

mod client;
mod server;
mod wire;

pub use client::{remote_registry, RemoteModel, RETRY_ATTEMPTS, RETRY_BACKOFF_MS};
pub use server::{router, serve, Server};
pub use wire::{ErrorBody, GenerateRequest, GenerateResponse, Health};
