use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, Encoding, EmbeddingProvider};
use crate::http::{self, HttpFailure};
use crate::sync::Semaphore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Environment variable holding a bearer token, if the service needs one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_retries() -> u32 {
    2
}
fn default_max_in_flight() -> usize {
    4
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    text: &'a str,
}

/// Client for an embedding service speaking `POST {model, text}` →
/// `{tokens: [{text, start_char, end_char, vector}], sentence_vector}`.
pub struct RemoteProvider {
    config: RemoteConfig,
    model: String,
    agent: ureq::Agent,
    in_flight: Semaphore,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig, model: String) -> Self {
        Self {
            agent: http::agent(Duration::from_millis(config.timeout_ms)),
            in_flight: Semaphore::new(config.max_in_flight),
            config,
            model,
        }
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn encode(&self, text: &str) -> Result<Encoding, EmbedError> {
        let _permit = self.in_flight.acquire();
        let token = self
            .config
            .api_key_env
            .as_ref()
            .and_then(|k| std::env::var(k).ok());
        let body = EmbedRequest {
            model: &self.model,
            text,
        };
        http::post_json::<_, Encoding>(
            &self.agent,
            &self.config.endpoint,
            token.as_deref(),
            &body,
            self.config.max_retries,
        )
        .map(|(enc, _)| enc)
        .map_err(|(failure, _)| match failure {
            HttpFailure::Status(status) => EmbedError::Http { status },
            HttpFailure::Decode(msg) => EmbedError::Format(msg),
            other => EmbedError::ProviderUnavailable(other.to_string()),
        })
    }
}
