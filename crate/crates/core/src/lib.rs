//! Fine-grained confidence estimation for text generation.
//!
//! The crate estimates how likely a (possibly partial) generated answer is
//! to end in a correct final answer, and builds the supervision data needed
//! to train models that emit such estimates themselves:
//!
//! - [`types`] / [`matcher`]: the domain model (questions, sequence states,
//!   completions, confidence records) and answer-matching semantics.
//! - [`generator`]: a pluggable text-generation interface with an HTTP
//!   chat-completions backend and a deterministic simulated backend whose
//!   per-prefix correctness probabilities are known analytically.
//! - [`mcsampler`]: Monte-Carlo confidence estimation — the fraction of `k`
//!   sampled continuations that reach the gold answer.
//! - [`pipeline`]: progressive answer-tree construction (full / clustered /
//!   linear expansion strategies) and training-data emission, with exact
//!   generation-cost accounting.
//! - [`positions`]: strategies for picking where in a generation to
//!   estimate confidence (paragraph ends, fixed intervals, entropy spikes).
//! - [`bci`]: backward confidence integration — recursive revision of a
//!   local estimate using sampled future estimates.
//! - [`metrics`]: ECE, AUROC, accuracy, selective-prediction filtering and
//!   reliability-diagram export.

pub mod bci;
pub mod cluster;
pub mod embed;
pub mod generator;
mod hashing;
pub mod matcher;
pub mod mcsampler;
pub mod metrics;
pub mod pipeline;
pub mod positions;
pub mod types;

pub use generator::{CostLedger, CostSnapshot, GenerationConfig, GeneratorError, TextGenerator};
pub use matcher::match_answer;
pub use types::{
    Completion, ConfidenceRecord, FinishReason, MatcherKind, Question, SequenceKind, SequenceState,
};
