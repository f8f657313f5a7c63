use std::sync::Arc;
use std::time::Duration;

use attrib_core::modelhub::{Generation, Generator, ModelInfo, ModelRegistry};
use attrib_core::simlm::{GenerationConfig, Role};
use attrib_core::{Error, Result};
use ureq::Agent;

use crate::wire::{ErrorBody, GenerateRequest, GenerateResponse, Health};

pub const RETRY_ATTEMPTS: usize = 3;
/// Delay before the first retry; doubles after each further failure.
pub const RETRY_BACKOFF_MS: u64 = 100;

fn agent() -> Agent {
    Agent::config_builder().timeout_global(Some(Duration::from_secs(30))).http_status_as_error(false).build().into()
}

fn transport(model: &str, e: impl std::fmt::Display) -> Error {
    Error::Generation { model: model.into(), message: e.to_string(), retryable: true }
}

/// A model behind a running service.
pub struct RemoteModel {
    endpoint: String,
    model_id: String,
    agent: Agent,
}

impl RemoteModel {
    /// Fails unless the endpoint answers its health check.
    pub fn connect(endpoint: &str, model_id: &str) -> Result<Self> {
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let agent = agent();
        health(&agent, &endpoint, model_id)?;
        Ok(Self { endpoint, model_id: model_id.into(), agent })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn list(endpoint: &str) -> Result<Vec<ModelInfo>> {
        let endpoint = endpoint.trim_end_matches('/');
        let agent = agent();
        health(&agent, endpoint, "")?;
        let mut resp = agent.get(format!("{endpoint}/v1/models")).call().map_err(|e| transport("", e))?;
        if !resp.status().is_success() {
            return Err(transport("", format!("listing models returned {}", resp.status())));
        }
        resp.body_mut().read_json().map_err(|e| transport("", e))
    }

    fn attempt(&self, req: &GenerateRequest) -> Result<Generation> {
        let mut resp = self
            .agent
            .post(format!("{}/v1/generate", self.endpoint))
            .send_json(req)
            .map_err(|e| transport(&self.model_id, e))?;
        let status = resp.status();
        if status.is_success() {
            let body: GenerateResponse = resp.body_mut().read_json().map_err(|e| transport(&self.model_id, e))?;
            return Ok(Generation { text: body.response, compute_micros: Some(body.latency_micros) });
        }
        let message = match resp.body_mut().read_json::<ErrorBody>() {
            Ok(b) => format!("{}: {}", b.code, b.message),
            Err(_) => format!("status {status}"),
        };
        Err(Error::Generation { model: self.model_id.clone(), message, retryable: status.is_server_error() })
    }
}

fn health(agent: &Agent, endpoint: &str, model: &str) -> Result<()> {
    let mut resp = agent.get(format!("{endpoint}/v1/health")).call().map_err(|e| Error::Generation {
        model: model.into(),
        message: format!("health check failed: {e}"),
        retryable: false,
    })?;
    match resp.body_mut().read_json::<Health>() {
        Ok(h) if resp.status().is_success() && h.status == "ok" => Ok(()),
        _ => Err(Error::Generation {
            model: model.into(),
            message: format!("health check failed with status {}", resp.status()),
            retryable: false,
        }),
    }
}

impl Generator for RemoteModel {
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<Generation> {
        config.validate()?;
        if config.stop_token != GenerationConfig::default().stop_token {
            return Err(Error::InvalidArgument("remote models use the default stop token".into()));
        }
        let req = GenerateRequest {
            model_id: self.model_id.clone(),
            prompt: prompt.into(),
            max_tokens: config.max_tokens,
            temperature: config.temperature,
            seed: config.seed,
        };
        let mut delay = Duration::from_millis(RETRY_BACKOFF_MS);
        let mut attempt = 1;
        loop {
            match self.attempt(&req) {
                Err(Error::Generation { retryable: true, message, .. }) if attempt < RETRY_ATTEMPTS => {
                    log::warn!("{} attempt {attempt} failed: {message}; retrying in {delay:?}", self.model_id);
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Registry of every model the endpoint lists. Lineage is unknown remotely,
/// so auxiliary models (which need one) are skipped.
pub fn remote_registry(endpoint: &str) -> Result<ModelRegistry> {
    let mut builder = ModelRegistry::builder();
    for info in RemoteModel::list(endpoint)? {
        if info.role == Role::Aux {
            log::warn!("skipping auxiliary model `{}`: lineage is not served", info.model_id);
            continue;
        }
        let model = Arc::new(RemoteModel::connect(endpoint, &info.model_id)?);
        builder = builder.remote(info.model_id, info.role, model, None);
    }
    builder.build()
}
