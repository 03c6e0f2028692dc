//! Blocking JSON POST with bounded retries, shared by the remote embedder and generator.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HttpFailure {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("response body could not be decoded: {0}")]
    Decode(String),
}

impl HttpFailure {
    fn is_transient(&self) -> bool {
        match self {
            HttpFailure::Timeout | HttpFailure::Transport(_) => true,
            HttpFailure::Status(code) => *code == 429 || *code >= 500,
            HttpFailure::Decode(_) => false,
        }
    }
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn classify(e: ureq::Error) -> HttpFailure {
    match e {
        ureq::Error::StatusCode(code) => HttpFailure::Status(code),
        ureq::Error::Timeout(_) => HttpFailure::Timeout,
        ureq::Error::Json(e) => HttpFailure::Decode(e.to_string()),
        other => HttpFailure::Transport(other.to_string()),
    }
}

/// POSTs `body` as JSON and decodes the response. Transient failures (timeouts, transport
/// errors, 429 and 5xx) are retried up to `max_retries` times with linear backoff.
/// Returns the decoded body and the number of attempts made.
pub(crate) fn post_json<B: Serialize, R: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    bearer: Option<&str>,
    body: &B,
    max_retries: u32,
) -> Result<(R, u32), (HttpFailure, u32)> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        let mut req = agent.post(url);
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let result = req
            .send_json(body)
            .map_err(classify)
            .and_then(|mut resp| resp.body_mut().read_json::<R>().map_err(classify));
        match result {
            Ok(r) => return Ok((r, attempt)),
            Err(f) if f.is_transient() && attempt <= max_retries => {
                std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
            }
            Err(f) => return Err((f, attempt)),
        }
    }
}
