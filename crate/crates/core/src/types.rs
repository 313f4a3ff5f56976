//! Shared domain types: questions, sequence states, completions and
//! confidence records. Everything here is immutable after construction and
//! safe to share across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How a candidate answer is compared against the gold answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    /// Lowercased, whitespace-collapsed, punctuation-stripped string equality.
    ExactNormalized,
    /// The last numeric literal of each string compared as exact rationals.
    NumericFinalAnswer,
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("question text must be non-empty")]
    EmptyQuestionText,
    #[error("gold answer must be non-empty")]
    EmptyGoldAnswer,
    #[error("sequence of kind {kind:?} requires {requirement}")]
    InvalidSequence {
        kind: SequenceKind,
        requirement: &'static str,
    },
    #[error("token_logprobs length {logprobs} does not match token count {tokens}")]
    LogprobLengthMismatch { tokens: usize, logprobs: usize },
    #[error("top_logprobs length {top} does not match token count {tokens}")]
    TopLogprobLengthMismatch { tokens: usize, top: usize },
    #[error("log probability {0} is positive")]
    PositiveLogprob(f64),
    #[error("confidence counts invalid: {n_correct} correct of {k_used}")]
    InvalidCounts { n_correct: u32, k_used: u32 },
}

/// A prompt with its reference answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    /// Opaque identifier, unique within a run.
    pub id: String,
    /// The prompt text.
    pub text: String,
    /// Reference answer the sampled answers are matched against.
    pub gold_answer: String,
    pub matcher_kind: MatcherKind,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        gold_answer: impl Into<String>,
        matcher_kind: MatcherKind,
    ) -> Result<Self, DomainError> {
        let q = Self {
            id: id.into(),
            text: text.into(),
            gold_answer: gold_answer.into(),
            matcher_kind,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.text.trim().is_empty() {
            return Err(DomainError::EmptyQuestionText);
        }
        if self.gold_answer.trim().is_empty() {
            return Err(DomainError::EmptyGoldAnswer);
        }
        Ok(())
    }
}

/// The three task variants a sequence can be in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    /// Bare question, no answer text yet.
    Question,
    /// Question plus a partial answer prefix.
    QuestionWithPartialAnswer,
    /// Question plus a complete answer.
    QuestionWithAnswer,
}

/// A question plus an optional (partial) answer prefix — the unit confidence
/// is estimated for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceState {
    pub question_id: String,
    /// Answer text so far; empty exactly when `kind` is `Question`.
    pub prefix_text: String,
    pub kind: SequenceKind,
    /// 0-based calibration-position ordinal within the answer.
    pub position_index: u32,
}

impl SequenceState {
    /// Bare-question state.
    pub fn question(question_id: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            prefix_text: String::new(),
            kind: SequenceKind::Question,
            position_index: 0,
        }
    }

    pub fn partial(
        question_id: impl Into<String>,
        prefix_text: impl Into<String>,
        position_index: u32,
    ) -> Result<Self, DomainError> {
        let s = Self {
            question_id: question_id.into(),
            prefix_text: prefix_text.into(),
            kind: SequenceKind::QuestionWithPartialAnswer,
            position_index,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn full_answer(
        question_id: impl Into<String>,
        answer_text: impl Into<String>,
        position_index: u32,
    ) -> Result<Self, DomainError> {
        let s = Self {
            question_id: question_id.into(),
            prefix_text: answer_text.into(),
            kind: SequenceKind::QuestionWithAnswer,
            position_index,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let empty = self.prefix_text.trim().is_empty();
        match self.kind {
            SequenceKind::Question if !empty => Err(DomainError::InvalidSequence {
                kind: self.kind,
                requirement: "an empty prefix",
            }),
            SequenceKind::QuestionWithPartialAnswer | SequenceKind::QuestionWithAnswer if empty => {
                Err(DomainError::InvalidSequence {
                    kind: self.kind,
                    requirement: "a non-empty prefix",
                })
            }
            _ => Ok(()),
        }
    }

    /// The prompt sent to a generator for this state: the question text,
    /// then the answer prefix on a new line when present.
    pub fn prompt_text(&self, question: &Question) -> String {
        if self.prefix_text.is_empty() {
            question.text.clone()
        } else {
            format!("{}\n{}", question.text, self.prefix_text)
        }
    }
}

/// Why a completion stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// One alternative token with its log probability, as reported at a single
/// generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAlternative {
    pub token: String,
    pub logprob: f64,
}

/// One sampled continuation, with whatever token-level detail the backend
/// exposes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// Generator-reported tokens; may be empty when the backend exposes none.
    pub tokens: Vec<String>,
    /// Per-token log probabilities, aligned with `tokens` when present.
    pub token_logprobs: Option<Vec<f64>>,
    /// Per-token top-k alternatives, aligned with `tokens` when present.
    pub top_logprobs: Option<Vec<Vec<TokenAlternative>>>,
    pub finish_reason: FinishReason,
}

impl Completion {
    pub fn new(
        text: impl Into<String>,
        tokens: Vec<String>,
        token_logprobs: Option<Vec<f64>>,
        top_logprobs: Option<Vec<Vec<TokenAlternative>>>,
        finish_reason: FinishReason,
    ) -> Result<Self, DomainError> {
        let c = Self {
            text: text.into(),
            tokens,
            token_logprobs,
            top_logprobs,
            finish_reason,
        };
        c.validate()?;
        Ok(c)
    }

    /// Bare completion with only text and whitespace tokens; handy in tests.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = text.split_whitespace().map(str::to_owned).collect();
        Self {
            text,
            tokens,
            token_logprobs: None,
            top_logprobs: None,
            finish_reason: FinishReason::Stop,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if let Some(lps) = &self.token_logprobs {
            if lps.len() != self.tokens.len() {
                return Err(DomainError::LogprobLengthMismatch {
                    tokens: self.tokens.len(),
                    logprobs: lps.len(),
                });
            }
            for &lp in lps {
                if lp > 0.0 {
                    return Err(DomainError::PositiveLogprob(lp));
                }
            }
        }
        if let Some(top) = &self.top_logprobs {
            if top.len() != self.tokens.len() {
                return Err(DomainError::TopLogprobLengthMismatch {
                    tokens: self.tokens.len(),
                    top: top.len(),
                });
            }
            for alts in top {
                for alt in alts {
                    if alt.logprob > 0.0 {
                        return Err(DomainError::PositiveLogprob(alt.logprob));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A sequence with its Monte-Carlo confidence estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub sequence: SequenceState,
    /// `n_correct / k_used`, exactly.
    pub raw_conf: f64,
    pub k_used: u32,
    pub n_correct: u32,
    /// Backward-integrated confidence, when computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjusted_conf: Option<f64>,
    /// Set when the full answer's correctness is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_final_correct: Option<bool>,
}

impl ConfidenceRecord {
    pub fn from_counts(
        sequence: SequenceState,
        n_correct: u32,
        k_used: u32,
    ) -> Result<Self, DomainError> {
        if k_used == 0 || n_correct > k_used {
            return Err(DomainError::InvalidCounts { n_correct, k_used });
        }
        Ok(Self {
            sequence,
            raw_conf: f64::from(n_correct) / f64::from(k_used),
            k_used,
            n_correct,
            adjusted_conf: None,
            is_final_correct: None,
        })
    }

    /// The confidence to act on: adjusted when present, raw otherwise.
    pub fn effective_conf(&self) -> f64 {
        self.adjusted_conf.unwrap_or(self.raw_conf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_rejects_empty_fields() {
        assert!(Question::new("q", "", "42", MatcherKind::NumericFinalAnswer).is_err());
        assert!(Question::new("q", "what?", "  ", MatcherKind::ExactNormalized).is_err());
        assert!(Question::new("q", "what?", "42", MatcherKind::NumericFinalAnswer).is_ok());
    }

    #[test]
    fn sequence_kind_matches_prefix() {
        assert!(SequenceState::partial("q", "", 0).is_err());
        assert!(SequenceState::full_answer("q", " ", 0).is_err());
        let s = SequenceState::question("q");
        assert!(s.validate().is_ok());
        assert_eq!(s.kind, SequenceKind::Question);
    }

    #[test]
    fn prompt_text_appends_prefix() {
        let q = Question::new("q", "Add 1 and 2.", "3", MatcherKind::NumericFinalAnswer).unwrap();
        let s = SequenceState::partial("q", "First we note", 0).unwrap();
        assert_eq!(s.prompt_text(&q), "Add 1 and 2.\nFirst we note");
        assert_eq!(SequenceState::question("q").prompt_text(&q), "Add 1 and 2.");
    }

    #[test]
    fn completion_validates_logprob_alignment() {
        let tokens = vec!["a".to_owned(), "b".to_owned()];
        assert!(Completion::new("a b", tokens.clone(), Some(vec![-0.1]), None, FinishReason::Stop)
            .is_err());
        assert!(Completion::new(
            "a b",
            tokens.clone(),
            Some(vec![-0.1, 0.5]),
            None,
            FinishReason::Stop
        )
        .is_err());
        assert!(Completion::new(
            "a b",
            tokens,
            Some(vec![-0.1, 0.0]),
            None,
            FinishReason::Stop
        )
        .is_ok());
    }

    #[test]
    fn record_counts_are_exact() {
        let s = SequenceState::question("q");
        let r = ConfidenceRecord::from_counts(s.clone(), 7, 10).unwrap();
        assert_eq!(r.raw_conf, 0.7);
        assert!(ConfidenceRecord::from_counts(s.clone(), 11, 10).is_err());
        assert!(ConfidenceRecord::from_counts(s, 0, 0).is_err());
    }
}
