//! Text-generation backends: a chat-completions HTTP client plus seeded
//! mocks for tests and offline runs.

use std::collections::VecDeque;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::policy::argmax_phase;
use crate::sim::{Phase, PHASES};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LLMRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_seconds: u64,
    /// Per-phase pressures of the observed intersection. Never serialized
    /// on the wire; mock backends use it as their decision oracle.
    pub pressure_hint: Option<[i64; 4]>,
}

impl LLMRequest {
    pub fn new(model: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        LLMRequest {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 1024,
            timeout_seconds: 60,
            pressure_hint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LLMResponse {
    pub raw: String,
    pub phase: Phase,
    pub latency: Duration,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error("missing auth token (set {0})")]
    MissingAuth(String),
}

pub trait Backend {
    fn name(&self) -> &str;
    fn complete(&mut self, request: &LLMRequest) -> Result<String, BackendError>;
}

fn mock_reply(phase: Phase) -> String {
    format!(
        "Step 1: Comparing the queued and approaching vehicles across the four signals, \
the {code} group carries the largest imbalance.\nStep 2: <signal>{code}</signal>",
        code = phase.code()
    )
}

fn oracle_phase(request: &LLMRequest) -> Phase {
    match request.pressure_hint {
        Some(p) => argmax_phase(&p),
        None => Phase::EastWestLeft,
    }
}

/// Always answers the pressure-optimal phase in a well-formed reply.
#[derive(Debug, Default, Clone)]
pub struct DeterministicMockBackend;

impl Backend for DeterministicMockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&mut self, request: &LLMRequest) -> Result<String, BackendError> {
        Ok(mock_reply(oracle_phase(request)))
    }
}

/// Answers the pressure-optimal phase, except with probability `error_rate`
/// it picks one of the three other (valid) phases uniformly.
#[derive(Debug, Clone)]
pub struct StochasticMockBackend {
    rng: ChaCha8Rng,
    error_rate: f64,
}

impl StochasticMockBackend {
    pub fn new(seed: u64, error_rate: f64) -> Self {
        assert!((0.0..=1.0).contains(&error_rate));
        StochasticMockBackend { rng: ChaCha8Rng::seed_from_u64(seed), error_rate }
    }
}

impl Backend for StochasticMockBackend {
    fn name(&self) -> &str {
        "mock-stochastic"
    }

    fn complete(&mut self, request: &LLMRequest) -> Result<String, BackendError> {
        let best = oracle_phase(request);
        let phase = if self.rng.gen::<f64>() < self.error_rate {
            let others: Vec<Phase> = PHASES.into_iter().filter(|p| *p != best).collect();
            others[self.rng.gen_range(0..others.len())]
        } else {
            best
        };
        Ok(mock_reply(phase))
    }
}

/// Replays a fixed sequence of outcomes; for exercising retry paths.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: VecDeque<Result<String, BackendError>>,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<Result<String, BackendError>>) -> Self {
        ScriptedBackend { replies: replies.into() }
    }

    pub fn remaining(&self) -> usize {
        self.replies.len()
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&mut self, _request: &LLMRequest) -> Result<String, BackendError> {
        self.replies
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::BadResponse("script exhausted".into())))
    }
}

#[cfg(feature = "http-backend")]
pub use http::HttpBackend;

#[cfg(feature = "http-backend")]
mod http {
    use super::*;
    use serde::{Deserialize, Serialize};

    pub const TOKEN_ENV: &str = "VOTELIGHT_LLM_TOKEN";

    #[derive(Serialize)]
    struct ChatMessage<'a> {
        role: &'a str,
        content: &'a str,
    }

    #[derive(Serialize)]
    struct ChatBody<'a> {
        model: &'a str,
        messages: Vec<ChatMessage<'a>>,
        temperature: f64,
        max_tokens: u32,
    }

    #[derive(Deserialize)]
    struct ChatChoice {
        message: ChatReplyMessage,
    }

    #[derive(Deserialize)]
    struct ChatReplyMessage {
        content: String,
    }

    #[derive(Deserialize)]
    struct ChatReply {
        choices: Vec<ChatChoice>,
    }

    /// Chat-completions client. The bearer token is read from the
    /// `VOTELIGHT_LLM_TOKEN` environment variable at construction.
    pub struct HttpBackend {
        base_url: String,
        token: Option<String>,
        client: reqwest::blocking::Client,
    }

    impl HttpBackend {
        pub fn new(base_url: impl Into<String>) -> Self {
            HttpBackend {
                base_url: base_url.into(),
                token: std::env::var(TOKEN_ENV).ok(),
                client: reqwest::blocking::Client::new(),
            }
        }

        fn endpoint(&self) -> String {
            format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
        }
    }

    impl Backend for HttpBackend {
        fn name(&self) -> &str {
            "http"
        }

        fn complete(&mut self, request: &LLMRequest) -> Result<String, BackendError> {
            let body = ChatBody {
                model: &request.model,
                messages: vec![
                    ChatMessage { role: "system", content: &request.system },
                    ChatMessage { role: "user", content: &request.user },
                ],
                temperature: request.temperature,
                max_tokens: request.max_tokens,
            };
            let mut builder = self
                .client
                .post(self.endpoint())
                .timeout(Duration::from_secs(request.timeout_seconds))
                .json(&body);
            if let Some(token) = &self.token {
                builder = builder.bearer_auth(token);
            }
            let resp = builder.send().map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Transport(e.to_string())
                }
            })?;
            if !resp.status().is_success() {
                return Err(BackendError::BadResponse(format!("HTTP {}", resp.status())));
            }
            let reply: ChatReply = resp
                .json()
                .map_err(|e| BackendError::BadResponse(e.to_string()))?;
            reply
                .choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .ok_or_else(|| BackendError::BadResponse("empty choices".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::prompt::parse_signal;

    fn req(hint: [i64; 4]) -> LLMRequest {
        let mut r = LLMRequest::new("m", "sys", "user");
        r.pressure_hint = Some(hint);
        r
    }

    #[test]
    fn default_temperature_is_pinned() {
        assert_eq!(LLMRequest::new("m", "s", "u").temperature, 0.1);
    }

    #[test]
    fn deterministic_mock_answers_the_pressure_argmax() {
        let mut b = DeterministicMockBackend;
        let raw = b.complete(&req([1, 5, 2, 5])).unwrap();
        assert_eq!(parse_signal(&raw), Ok(Phase::NorthSouthLeft));
        assert_eq!(b.complete(&req([1, 5, 2, 5])).unwrap(), raw);
    }

    #[test]
    fn stochastic_mock_is_seed_reproducible_and_always_valid() {
        let run = |seed| {
            let mut b = StochasticMockBackend::new(seed, 0.2);
            (0..200)
                .map(|i| parse_signal(&b.complete(&req([i, 0, 0, 0])).unwrap()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn stochastic_mock_error_rate_is_close_to_nominal() {
        let mut b = StochasticMockBackend::new(3, 0.2);
        let hint = [0, 0, 7, 0];
        let n = 5000;
        let wrong = (0..n)
            .filter(|_| {
                parse_signal(&b.complete(&req(hint)).unwrap()).unwrap() != Phase::EastWestThrough
            })
            .count();
        // Binomial(5000, 0.2): sigma ~ 28, allow +-4 sigma.
        assert!((wrong as f64 - 1000.0).abs() < 115.0, "wrong = {wrong}");
    }

    #[test]
    fn scripted_backend_replays_in_order_then_errors() {
        let mut b = ScriptedBackend::new(vec![
            Ok("<signal>NTST</signal>".into()),
            Err(BackendError::Timeout),
        ]);
        assert!(b.complete(&req([0; 4])).is_ok());
        assert!(matches!(b.complete(&req([0; 4])), Err(BackendError::Timeout)));
        assert!(matches!(b.complete(&req([0; 4])), Err(BackendError::BadResponse(_))));
    }
}
