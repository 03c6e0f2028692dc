//! Completion backends: a remote LLM endpoint, and two deterministic mocks.
//!
//! `mock-gold` answers with the gold output of the query, which makes the rest of the pipeline
//! checkable end to end. `mock-echo-nearest` answers with the output of the most similar
//! in-prompt example, which measures what retrieval alone contributes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::corpus::{EntitySchema, EntityType, NerOutput};
use crate::http::{self, HttpFailure};
use crate::promptkit::{parse_output, render_output, Grounding, Prompt};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GenerationError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status} after {attempts} attempt(s)")]
    Http { status: u16, attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("could not decode the completion response: {message}")]
    Decode { message: String },
    #[error("mock-gold backend needs the query's gold output")]
    MissingGold,
    #[error("invalid generator spec: {message}")]
    InvalidSpec { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    RemoteCompletion,
    #[default]
    MockGold,
    MockEchoNearest,
}

impl Backend {
    pub fn tag(self) -> &'static str {
        match self {
            Backend::RemoteCompletion => "remote-completion",
            Backend::MockGold => "mock-gold",
            Backend::MockEchoNearest => "mock-echo-nearest",
        }
    }
}

/// Request body shape for the remote backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WireFormat {
    /// `{prompt, max_tokens, temperature}` → `{text}` (or `{choices:[{text}]}`).
    #[default]
    Completion,
    /// `{messages:[{role, content}], ...}` → `{choices:[{message:{content}}]}`.
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub backend: Backend,
    pub endpoint: Option<String>,
    pub wire_format: WireFormat,
    /// Sent as `model` when set.
    pub model: Option<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// Environment variable holding a bearer token.
    pub api_key_env: Option<String>,
    /// Artificial mock latency, for exercising the batch machinery.
    pub mock_delay_ms: u64,
    /// Extra mock latency in `[0, mock_jitter_ms]`, derived from the prompt hash.
    pub mock_jitter_ms: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            backend: Backend::MockGold,
            endpoint: None,
            wire_format: WireFormat::Completion,
            model: None,
            max_tokens: 256,
            temperature: 0.0,
            timeout_ms: 60_000,
            max_retries: 2,
            parallelism: 4,
            api_key_env: None,
            mock_delay_ms: 0,
            mock_jitter_ms: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn mock(backend: Backend) -> Self {
        Self {
            backend,
            ..Self::default()
        }
    }

    pub fn remote(endpoint: &str) -> Self {
        Self {
            backend: Backend::RemoteCompletion,
            endpoint: Some(endpoint.to_string()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let invalid = |m: &str| {
            Err(GenerationError::InvalidSpec {
                message: m.to_string(),
            })
        };
        if !(self.temperature >= 0.0) {
            return invalid("temperature must be >= 0");
        }
        if self.parallelism == 0 {
            return invalid("parallelism must be >= 1");
        }
        if self.backend == Backend::RemoteCompletion && self.endpoint.is_none() {
            return invalid("remote-completion needs an endpoint");
        }
        Ok(())
    }
}

/// What a backend sees: the prompt, plus the query's gold output for `mock-gold`.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a Prompt,
    pub gold: Option<&'a NerOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub completion_text: String,
    pub latency_s: f64,
    pub backend_tag: String,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub p90_s: f64,
    pub p99_s: f64,
}

impl LatencySummary {
    /// Median averages the two middle values; other percentiles use nearest rank.
    pub fn from_latencies(latencies: &[f64]) -> Self {
        if latencies.is_empty() {
            return Self::default();
        }
        let mut v = latencies.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let rank = |p: f64| v[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Self {
            count: n,
            mean_s: v.iter().sum::<f64>() / n as f64,
            median_s: median,
            p90_s: rank(0.90),
            p99_s: rank(0.99),
        }
    }

    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a Result<GenerationResult, GenerationError>>) -> Self {
        let lat: Vec<f64> = results
            .into_iter()
            .filter_map(|r| r.as_ref().ok().map(|g| g.latency_s))
            .collect();
        Self::from_latencies(&lat)
    }
}

/// Hex SHA-256 of the rendered prompt.
pub fn prompt_hash(rendered: &str) -> String {
    hex::encode(Sha256::digest(rendered.as_bytes()))
}

pub struct Generator {
    spec: GeneratorSpec,
    agent: Option<ureq::Agent>,
    api_key: Option<String>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generator").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl Generator {
    pub fn new(spec: GeneratorSpec) -> Result<Self, GenerationError> {
        spec.validate()?;
        let agent = (spec.backend == Backend::RemoteCompletion)
            .then(|| http::agent(Duration::from_millis(spec.timeout_ms)));
        let api_key = spec.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        Ok(Self {
            spec,
            agent,
            api_key,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Highest number of concurrent `generate` calls observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn generate(&self, req: GenerationRequest<'_>) -> Result<GenerationResult, GenerationError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let start = Instant::now();
        let result = self.dispatch(req);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let (completion_text, attempt_count) = result?;
        Ok(GenerationResult {
            completion_text,
            latency_s: start.elapsed().as_secs_f64(),
            backend_tag: self.spec.backend.tag().to_string(),
            attempt_count,
        })
    }

    fn dispatch(&self, req: GenerationRequest<'_>) -> Result<(String, u32), GenerationError> {
        match self.spec.backend {
            Backend::RemoteCompletion => self.remote(req.prompt),
            Backend::MockGold => {
                self.mock_delay(req.prompt);
                let gold = req.gold.ok_or(GenerationError::MissingGold)?;
                Ok((render_output(&gold.project(&req.prompt.type_names())), 1))
            }
            Backend::MockEchoNearest => {
                self.mock_delay(req.prompt);
                Ok((echo_nearest(req.prompt), 1))
            }
        }
    }

    fn mock_delay(&self, prompt: &Prompt) {
        let mut ms = self.spec.mock_delay_ms;
        if self.spec.mock_jitter_ms > 0 {
            let h = Sha256::digest(prompt.rendered.as_bytes());
            let x = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
            ms += x % (self.spec.mock_jitter_ms + 1);
        }
        if ms > 0 {
            std::thread::sleep(Duration::from_millis(ms));
        }
    }

    fn remote(&self, prompt: &Prompt) -> Result<(String, u32), GenerationError> {
        let agent = self.agent.as_ref().expect("remote backend has an agent");
        let url = self.spec.endpoint.as_deref().expect("validated");
        let mut body = match self.spec.wire_format {
            WireFormat::Completion => json!({
                "prompt": prompt.rendered,
                "max_tokens": self.spec.max_tokens,
                "temperature": self.spec.temperature,
            }),
            WireFormat::Chat => json!({
                "messages": [{"role": "user", "content": prompt.rendered}],
                "max_tokens": self.spec.max_tokens,
                "temperature": self.spec.temperature,
            }),
        };
        if let Some(m) = &self.spec.model {
            body["model"] = json!(m);
        }
        let (resp, attempts) = http::post_json::<_, Value>(agent, url, self.api_key.as_deref(), &body, self.spec.max_retries)
            .map_err(|(f, attempts)| match f {
                HttpFailure::Timeout => GenerationError::Timeout { attempts },
                HttpFailure::Status(status) => GenerationError::Http { status, attempts },
                HttpFailure::Transport(message) => GenerationError::Transport { message, attempts },
                HttpFailure::Decode(message) => GenerationError::Decode { message },
            })?;
        let text = extract_text(&resp).ok_or_else(|| GenerationError::Decode {
            message: "no `text`, `choices[0].text` or `choices[0].message.content` field".into(),
        })?;
        Ok((text.to_string(), attempts))
    }

    /// Runs every request with at most `parallelism` in flight. Results are in input order.
    pub fn generate_batch(&self, reqs: &[GenerationRequest<'_>]) -> Vec<Result<GenerationResult, GenerationError>> {
        let slots: Vec<Mutex<Option<Result<GenerationResult, GenerationError>>>> =
            reqs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.spec.parallelism.min(reqs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let r = self.generate(reqs[i]);
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .unwrap_or_else(|e| e.into_inner())
                    .expect("every slot filled")
            })
            .collect()
    }
}

fn extract_text(v: &Value) -> Option<&str> {
    v.get("text")
        .and_then(Value::as_str)
        .or_else(|| v.pointer("/choices/0/text").and_then(Value::as_str))
        .or_else(|| v.pointer("/choices/0/message/content").and_then(Value::as_str))
}

fn echo_nearest(prompt: &Prompt) -> String {
    let names = prompt.type_names();
    let schema = EntitySchema::new(
        prompt
            .entity_definitions
            .iter()
            .map(|(n, d)| EntityType {
                name: n.clone(),
                definition: if d.trim().is_empty() { n.clone() } else { d.clone() },
                aliases: Vec::new(),
            })
            .collect(),
    );
    let out = match (prompt.nearest_example_output(), schema) {
        (Some(text), Ok(schema)) => parse_output(text, &schema, "", Grounding::Off)
            .map(|p| p.output)
            .unwrap_or_else(|_| NerOutput::empty(&names)),
        _ => NerOutput::empty(&names),
    };
    render_output(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gold_output, LabeledSentence};
    use crate::promptkit::PromptBuilder;
    use crate::stub_server::StubServer;
    use std::sync::atomic::AtomicU32;
    use std::sync::Arc;

    fn schema() -> EntitySchema {
        EntitySchema::from_pairs(&[("person", "a person"), ("location", "a place")]).unwrap()
    }

    fn prompt(query: &str, examples: &[LabeledSentence]) -> Prompt {
        let s = schema();
        let exs: Vec<_> = examples
            .iter()
            .map(|e| (e.clone(), gold_output(e, &s).unwrap()))
            .collect();
        PromptBuilder::default().build(&s, &exs, query).unwrap()
    }

    fn obama() -> LabeledSentence {
        LabeledSentence::new(1, vec!["Obama".into(), "visited".into(), "Paris".into()], &[("person", 0, 1), ("location", 2, 3)])
    }

    #[test]
    fn mock_gold_renders_gold() {
        let g = Generator::new(GeneratorSpec::mock(Backend::MockGold)).unwrap();
        let p = prompt("Obama visited Paris", &[]);
        let gold = gold_output(&obama(), &schema()).unwrap();
        let r = g.generate(GenerationRequest { prompt: &p, gold: Some(&gold) }).unwrap();
        assert_eq!(r.completion_text, "{person:[Obama], location:[Paris]}");
        assert_eq!(r.backend_tag, "mock-gold");
        let err = g.generate(GenerationRequest { prompt: &p, gold: None }).unwrap_err();
        assert_eq!(err, GenerationError::MissingGold);
    }

    #[test]
    fn echo_nearest_returns_most_similar_example() {
        let g = Generator::new(GeneratorSpec::mock(Backend::MockEchoNearest)).unwrap();
        let other = LabeledSentence::new(2, vec!["in".into(), "Rome".into()], &[("location", 1, 2)]);
        // Retrieval order: most similar first.
        let p = prompt("Obama visited Paris", &[obama(), other]);
        let r = g.generate(GenerationRequest { prompt: &p, gold: None }).unwrap();
        assert_eq!(r.completion_text, "{person:[Obama], location:[Paris]}");
        let empty = prompt("x", &[]);
        let r = g.generate(GenerationRequest { prompt: &empty, gold: None }).unwrap();
        assert_eq!(r.completion_text, "{person:[], location:[]}");
    }

    #[test]
    fn latency_summary() {
        let s = LatencySummary::from_latencies(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(s.median_s, 2.5);
        assert_eq!(s.p90_s, 4.0);
        assert_eq!(s.mean_s, 2.5);
        let lat: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = LatencySummary::from_latencies(&lat);
        assert_eq!(s.p90_s, 90.0);
        assert_eq!(s.p99_s, 99.0);
        assert_eq!(LatencySummary::from_latencies(&[]).count, 0);
    }

    #[test]
    fn batch_is_keyed_and_bounded() {
        let spec = GeneratorSpec {
            parallelism: 8,
            mock_delay_ms: 2,
            mock_jitter_ms: 8,
            ..GeneratorSpec::mock(Backend::MockGold)
        };
        let g = Generator::new(spec).unwrap();
        let s = schema();
        let sentences: Vec<LabeledSentence> = (0..100)
            .map(|i| LabeledSentence::new(i, vec![format!("P{i}"), "spoke".into()], &[("person", 0, 1)]))
            .collect();
        let prompts: Vec<Prompt> = sentences.iter().map(|x| prompt(&x.text(), &[])).collect();
        let golds: Vec<NerOutput> = sentences.iter().map(|x| gold_output(x, &s).unwrap()).collect();
        let reqs: Vec<_> = prompts
            .iter()
            .zip(&golds)
            .map(|(p, g)| GenerationRequest { prompt: p, gold: Some(g) })
            .collect();
        let results = g.generate_batch(&reqs);
        assert_eq!(results.len(), 100);
        for (i, r) in results.iter().enumerate() {
            assert_eq!(r.as_ref().unwrap().completion_text, format!("{{person:[P{i}], location:[]}}"));
        }
        assert!(g.peak_in_flight() <= 8);
    }

    #[test]
    fn remote_completion_and_chat() {
        let server = StubServer::start(|path, body| {
            if path == "/chat" {
                let content = body["messages"][0]["content"].as_str().unwrap_or("");
                let text = format!("{{person:[{}]}}", content.len() % 7);
                (200, json!({"choices": [{"message": {"content": text}}]}).to_string())
            } else {
                assert_eq!(body["temperature"], json!(0.0));
                (200, json!({"text": "Sure: {person:[Obama]}"}).to_string())
            }
        })
        .unwrap();
        let p = prompt("Obama visited Paris", &[]);
        let g = Generator::new(GeneratorSpec::remote(&server.url("/complete"))).unwrap();
        let r = g.generate(GenerationRequest { prompt: &p, gold: None }).unwrap();
        assert_eq!(r.completion_text, "Sure: {person:[Obama]}");
        assert_eq!(r.attempt_count, 1);
        let chat = GeneratorSpec {
            wire_format: WireFormat::Chat,
            ..GeneratorSpec::remote(&server.url("/chat"))
        };
        let r = Generator::new(chat).unwrap().generate(GenerationRequest { prompt: &p, gold: None }).unwrap();
        assert!(r.completion_text.starts_with("{person:["));
    }

    #[test]
    fn remote_retries_then_succeeds() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let server = StubServer::start(move |_, _| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                (503, "{}".into())
            } else {
                (200, json!({"text": "{}"}).to_string())
            }
        })
        .unwrap();
        let g = Generator::new(GeneratorSpec::remote(&server.url("/"))).unwrap();
        let p = prompt("q", &[]);
        let r = g.generate(GenerationRequest { prompt: &p, gold: None }).unwrap();
        assert_eq!(r.attempt_count, 3);
    }

    #[test]
    fn remote_down_fails_per_record() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let spec = GeneratorSpec {
            max_retries: 1,
            timeout_ms: 2_000,
            ..GeneratorSpec::remote(&url)
        };
        let g = Generator::new(spec).unwrap();
        let ps: Vec<Prompt> = (0..3).map(|i| prompt(&format!("q{i}"), &[])).collect();
        let reqs: Vec<_> = ps.iter().map(|p| GenerationRequest { prompt: p, gold: None }).collect();
        let results = g.generate_batch(&reqs);
        assert_eq!(results.len(), 3);
        for r in results {
            assert!(matches!(r, Err(GenerationError::Transport { attempts: 2, .. })), "{r:?}");
        }
    }

    #[test]
    fn remote_client_error_is_not_retried() {
        let server = StubServer::start(|_, _| (400, "{}".into())).unwrap();
        let g = Generator::new(GeneratorSpec::remote(&server.url("/"))).unwrap();
        let p = prompt("q", &[]);
        assert_eq!(
            g.generate(GenerationRequest { prompt: &p, gold: None }).unwrap_err(),
            GenerationError::Http { status: 400, attempts: 1 }
        );
    }

    #[test]
    fn spec_validation() {
        assert!(Generator::new(GeneratorSpec { parallelism: 0, ..Default::default() }).is_err());
        assert!(Generator::new(GeneratorSpec { temperature: -1.0, ..Default::default() }).is_err());
        assert!(Generator::new(GeneratorSpec { backend: Backend::RemoteCompletion, ..Default::default() }).is_err());
    }
}
