//! Text-generation backends and the accounting shared between them.
//!
//! Two backends are provided: [`http::HttpGenerator`] speaks the common
//! chat-completions JSON protocol, and [`simulated::SimulatedGenerator`] is
//! a seeded world whose per-prefix correctness probabilities are known
//! analytically — the oracle every estimator in this crate is verified
//! against.

pub mod http;
pub mod simulated;

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

use crate::types::Completion;

/// Sampling parameters for one generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Samples returned per call.
    pub n: u32,
    pub request_logprobs: bool,
    pub top_logprobs_k: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 512,
            seed: None,
            n: 1,
            request_logprobs: false,
            top_logprobs_k: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.n == 0 {
            return Err(GeneratorError::InvalidArgument("n must be >= 1".into()));
        }
        if self.temperature < 0.0 || self.temperature.is_nan() {
            return Err(GeneratorError::InvalidArgument(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        if self.n > 1 && self.temperature == 0.0 {
            // Monte-Carlo estimation needs sampling diversity.
            return Err(GeneratorError::InvalidArgument(
                "temperature must be > 0 when n > 1".into(),
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GeneratorError::InvalidArgument(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(GeneratorError::InvalidArgument(
                "max_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_n(mut self, n: u32) -> Self {
        self.n = n;
        self
    }
}

/// Monotonic counters of generation work. One completion sampled = one
/// inference; a batched call of `n` samples increments the count by `n`.
#[derive(Debug, Default)]
pub struct CostLedger {
    inference_count: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, completions: u64, prompt_tokens: u64, completion_tokens: u64) {
        self.inference_count.fetch_add(completions, Ordering::Relaxed);
        self.prompt_tokens.fetch_add(prompt_tokens, Ordering::Relaxed);
        self.completion_tokens
            .fetch_add(completion_tokens, Ordering::Relaxed);
    }

    pub fn inference_count(&self) -> u64 {
        self.inference_count.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> CostSnapshot {
        CostSnapshot {
            inference_count: self.inference_count.load(Ordering::Relaxed),
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }
}

/// Plain-data view of a [`CostLedger`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSnapshot {
    pub inference_count: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl CostSnapshot {
    pub fn delta_since(&self, earlier: &CostSnapshot) -> CostSnapshot {
        CostSnapshot {
            inference_count: self.inference_count - earlier.inference_count,
            prompt_tokens: self.prompt_tokens - earlier.prompt_tokens,
            completion_tokens: self.completion_tokens - earlier.completion_tokens,
        }
    }

    pub fn add(&mut self, other: &CostSnapshot) {
        self.inference_count += other.inference_count;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("failed to decode service response ({message}); payload excerpt: {excerpt:?}")]
    Decode { message: String, excerpt: String },
    #[error("backend does not support {0}")]
    UnsupportedCapability(&'static str),
    #[error("no simulated question covers prompt starting {0:?}")]
    UnknownPrompt(String),
}

/// A text-generation backend. Implementations must be safe for concurrent
/// invocation and must account every sampled completion in their ledger.
pub trait TextGenerator: Send + Sync {
    /// Sample `config.n` continuations of `prompt`.
    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<Completion>, GeneratorError>;

    fn ledger(&self) -> &CostLedger;

    /// Whether this backend can return token logprobs when asked.
    fn supports_logprobs(&self) -> bool;
}

/// Shannon entropy (natural log) of the renormalized top-k alternative
/// distribution at one token position. Zero when a single alternative holds
/// all mass; `ln(k)` only for the uniform top-k distribution.
pub fn token_entropy(completion: &Completion, index: usize) -> Result<f64, GeneratorError> {
    let top = completion
        .top_logprobs
        .as_ref()
        .ok_or(GeneratorError::UnsupportedCapability(
            "token-level top_logprobs",
        ))?;
    let alts = top.get(index).ok_or_else(|| {
        GeneratorError::InvalidArgument(format!(
            "token index {index} out of range for {} tokens",
            top.len()
        ))
    })?;
    if alts.is_empty() {
        return Err(GeneratorError::UnsupportedCapability(
            "token-level top_logprobs",
        ));
    }
    let max_lp = alts
        .iter()
        .map(|a| a.logprob)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = alts.iter().map(|a| (a.logprob - max_lp).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut entropy = 0.0;
    for w in weights {
        let p = w / z;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    Ok(entropy.max(0.0))
}
