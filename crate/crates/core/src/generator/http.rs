//! HTTP backend speaking the common chat-completions JSON protocol.
//!
//! Requests carry model/messages/temperature/top_p/n/max_tokens and, when
//! asked, logprobs fields. Transient failures (transport errors, 429, 5xx)
//! are retried with exponential backoff; other statuses fail fast. A gate
//! caps in-flight requests across threads.

use serde::{Deserialize, Serialize};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{CostLedger, GenerationConfig, GeneratorError, TextGenerator};
use crate::types::{Completion, FinishReason, TokenAlternative};

/// Connection settings for a chat-completions service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Full URL of the completions endpoint.
    pub endpoint_url: String,
    pub model: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Environment variable holding the bearer token; requests go out
    /// unauthenticated when the variable is unset.
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_initial_backoff_ms")]
    pub initial_backoff_ms: u64,
    /// Whether the service can return token logprobs.
    #[serde(default = "default_true")]
    pub logprobs_supported: bool,
}

fn default_max_in_flight() -> u32 {
    8
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_auth_env() -> String {
    "SEQCONF_API_KEY".to_owned()
}
fn default_max_retries() -> u32 {
    3
}
fn default_initial_backoff_ms() -> u64 {
    500
}
fn default_true() -> bool {
    true
}

impl HttpConfig {
    pub fn new(endpoint_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model: model.into(),
            max_in_flight: default_max_in_flight(),
            timeout_ms: default_timeout_ms(),
            auth_env: default_auth_env(),
            max_retries: default_max_retries(),
            initial_backoff_ms: default_initial_backoff_ms(),
            logprobs_supported: true,
        }
    }
}

/// Counting gate limiting concurrent requests.
struct InFlightGate {
    state: Mutex<u32>,
    cv: Condvar,
    cap: u32,
}

impl InFlightGate {
    fn new(cap: u32) -> Self {
        Self {
            state: Mutex::new(0),
            cv: Condvar::new(),
            cap: cap.max(1),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut inflight = self.state.lock().expect("gate poisoned");
        while *inflight >= self.cap {
            inflight = self.cv.wait(inflight).expect("gate poisoned");
        }
        *inflight += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a InFlightGate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut inflight = self.gate.state.lock().expect("gate poisoned");
        *inflight -= 1;
        self.gate.cv.notify_one();
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    top_p: f64,
    n: u32,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_logprobs: Option<u32>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprobEntry>>,
}

#[derive(Deserialize)]
struct TokenLogprobEntry {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Option<Vec<TopLogprobEntry>>,
}

#[derive(Deserialize)]
struct TopLogprobEntry {
    token: String,
    logprob: f64,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

pub struct HttpGenerator {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
    gate: Arc<InFlightGate>,
    ledger: CostLedger,
}

impl HttpGenerator {
    pub fn new(config: HttpConfig) -> Result<Self, GeneratorError> {
        if config.endpoint_url.trim().is_empty() {
            return Err(GeneratorError::InvalidArgument(
                "endpoint_url must be non-empty".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GeneratorError::Transport {
                attempts: 0,
                message: format!("client construction failed: {e}"),
            })?;
        let token = std::env::var(&config.auth_env).ok();
        let gate = Arc::new(InFlightGate::new(config.max_in_flight));
        Ok(Self {
            config,
            client,
            token,
            gate,
            ledger: CostLedger::new(),
        })
    }

    /// Same connection and in-flight gate, fresh ledger.
    pub fn fork(&self) -> Self {
        Self {
            config: self.config.clone(),
            client: self.client.clone(),
            token: self.token.clone(),
            gate: Arc::clone(&self.gate),
            ledger: CostLedger::new(),
        }
    }

    fn post_with_retries(&self, body: &serde_json::Value) -> Result<String, GeneratorError> {
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let attempts = self.config.max_retries.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            let mut req = self.client.post(&self.config.endpoint_url).json(body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.text().map_err(|e| GeneratorError::Transport {
                            attempts: attempt,
                            message: format!("failed reading response body: {e}"),
                        });
                    }
                    let retriable = status.as_u16() == 429 || status.is_server_error();
                    let body_excerpt: String =
                        resp.text().unwrap_or_default().chars().take(200).collect();
                    last_error = format!("HTTP {status}: {body_excerpt}");
                    if !retriable {
                        return Err(GeneratorError::Transport {
                            attempts: attempt,
                            message: last_error,
                        });
                    }
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
            if attempt < attempts {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(GeneratorError::Transport {
            attempts,
            message: last_error,
        })
    }
}

fn decode_completions(
    raw: &str,
    expected_n: u32,
) -> Result<(Vec<Completion>, Option<Usage>), GeneratorError> {
    let decode_err = |message: String| GeneratorError::Decode {
        message,
        excerpt: raw.chars().take(200).collect(),
    };
    let parsed: ChatResponse =
        serde_json::from_str(raw).map_err(|e| decode_err(e.to_string()))?;
    if parsed.choices.len() != expected_n as usize {
        return Err(decode_err(format!(
            "expected {expected_n} choices, got {}",
            parsed.choices.len()
        )));
    }
    let mut completions = Vec::with_capacity(parsed.choices.len());
    for choice in parsed.choices {
        let text = choice.message.content.unwrap_or_default();
        let finish = match choice.finish_reason.as_deref() {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            None => FinishReason::Stop,
            Some(_) => FinishReason::Error,
        };
        let (tokens, token_logprobs, top_logprobs) = match choice.logprobs.and_then(|l| l.content)
        {
            Some(entries) => {
                let tokens: Vec<String> = entries.iter().map(|e| e.token.clone()).collect();
                // Some services emit tiny positive logprobs; clamp to zero.
                let lps: Vec<f64> = entries.iter().map(|e| e.logprob.min(0.0)).collect();
                let has_top = entries.iter().any(|e| e.top_logprobs.is_some());
                let top = has_top.then(|| {
                    entries
                        .iter()
                        .map(|e| {
                            e.top_logprobs
                                .as_ref()
                                .map(|alts| {
                                    alts.iter()
                                        .map(|a| TokenAlternative {
                                            token: a.token.clone(),
                                            logprob: a.logprob.min(0.0),
                                        })
                                        .collect()
                                })
                                .unwrap_or_default()
                        })
                        .collect::<Vec<Vec<TokenAlternative>>>()
                });
                (tokens, Some(lps), top)
            }
            None => (Vec::new(), None, None),
        };
        let completion = Completion::new(text, tokens, token_logprobs, top_logprobs, finish)
            .map_err(|e| decode_err(e.to_string()))?;
        completions.push(completion);
    }
    Ok((completions, parsed.usage))
}

impl TextGenerator for HttpGenerator {
    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<Completion>, GeneratorError> {
        config.validate()?;
        if prompt.trim().is_empty() {
            return Err(GeneratorError::InvalidArgument(
                "prompt must be non-empty".into(),
            ));
        }
        let request = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: config.temperature,
            top_p: config.top_p,
            n: config.n,
            max_tokens: config.max_tokens,
            seed: config.seed,
            logprobs: config.request_logprobs.then_some(true),
            top_logprobs: (config.request_logprobs && config.top_logprobs_k > 0)
                .then_some(config.top_logprobs_k),
        };
        let body = serde_json::to_value(&request)
            .expect("request serialization cannot fail");

        let _slot = self.gate.acquire();
        let raw = self.post_with_retries(&body)?;
        let (completions, usage) = decode_completions(&raw, config.n)?;

        let prompt_tokens = usage
            .as_ref()
            .and_then(|u| u.prompt_tokens)
            .unwrap_or_else(|| prompt.split_whitespace().count() as u64);
        let completion_tokens = usage
            .as_ref()
            .and_then(|u| u.completion_tokens)
            .unwrap_or_else(|| {
                completions
                    .iter()
                    .map(|c| {
                        if c.tokens.is_empty() {
                            c.text.split_whitespace().count() as u64
                        } else {
                            c.tokens.len() as u64
                        }
                    })
                    .sum()
            });
        self.ledger
            .record(u64::from(config.n), prompt_tokens, completion_tokens);
        Ok(completions)
    }

    fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    fn supports_logprobs(&self) -> bool {
        self.config.logprobs_supported
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_plain_response() {
        let raw = r#"{
            "choices": [
                {"message": {"content": "The answer is 42."}, "finish_reason": "stop"},
                {"message": {"content": "It is 41."}, "finish_reason": "length"}
            ],
            "usage": {"prompt_tokens": 12, "completion_tokens": 9}
        }"#;
        let (completions, usage) = decode_completions(raw, 2).unwrap();
        assert_eq!(completions[0].text, "The answer is 42.");
        assert_eq!(completions[0].finish_reason, FinishReason::Stop);
        assert_eq!(completions[1].finish_reason, FinishReason::Length);
        assert_eq!(usage.unwrap().prompt_tokens, Some(12));
    }

    #[test]
    fn decode_logprobs_and_clamp() {
        let raw = r#"{
            "choices": [{
                "message": {"content": "Hi"},
                "finish_reason": "stop",
                "logprobs": {"content": [
                    {"token": "Hi", "logprob": 1e-9,
                     "top_logprobs": [{"token": "Hi", "logprob": 0.0}, {"token": "Yo", "logprob": -2.5}]}
                ]}
            }]
        }"#;
        let (completions, _) = decode_completions(raw, 1).unwrap();
        let c = &completions[0];
        assert_eq!(c.tokens, vec!["Hi".to_owned()]);
        assert_eq!(c.token_logprobs.as_ref().unwrap()[0], 0.0);
        assert_eq!(c.top_logprobs.as_ref().unwrap()[0].len(), 2);
    }

    #[test]
    fn decode_rejects_wrong_choice_count() {
        let raw = r#"{"choices": [{"message": {"content": "x"}}]}"#;
        assert!(matches!(
            decode_completions(raw, 3),
            Err(GeneratorError::Decode { .. })
        ));
    }

    #[test]
    fn decode_malformed_carries_excerpt() {
        let raw = "not json at all";
        match decode_completions(raw, 1) {
            Err(GeneratorError::Decode { excerpt, .. }) => {
                assert!(excerpt.contains("not json"));
            }
            other => panic!("expected decode error, got {other:?}"),
        }
    }
}
