//! Monte-Carlo confidence estimation: sample `k` continuations of a
//! sequence, match each reconstructed answer against the gold answer, and
//! report the hit fraction as the confidence of that sequence.

use thiserror::Error;

use crate::generator::{GenerationConfig, GeneratorError, TextGenerator};
use crate::matcher::{match_answer, MatchError};
use crate::types::{
    Completion, ConfidenceRecord, MatcherKind, Question, SequenceKind, SequenceState,
};

/// How many samples to draw and with what settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub k: u32,
    pub config: GenerationConfig,
    pub matcher_kind: MatcherKind,
}

/// Sample count used when nothing else is configured.
pub const DEFAULT_K: u32 = 30;

impl SamplingPlan {
    pub fn new(
        k: u32,
        config: GenerationConfig,
        matcher_kind: MatcherKind,
    ) -> Result<Self, EstimateError> {
        let plan = Self {
            k,
            config,
            matcher_kind,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        if self.k == 0 {
            return Err(EstimateError::InvalidArgument("k must be >= 1".into()));
        }
        if self.k > 1 && self.config.temperature == 0.0 {
            return Err(EstimateError::InvalidArgument(
                "Monte-Carlo estimation with k > 1 requires temperature > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn with_matcher(mut self, matcher_kind: MatcherKind) -> Self {
        self.matcher_kind = matcher_kind;
        self
    }
}

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sequence belongs to question {got:?}, expected {expected:?}")]
    QuestionMismatch { expected: String, got: String },
    #[error("complete answers are scored directly; use score_full_answer")]
    FullAnswerKind,
    #[error(transparent)]
    Match(#[from] MatchError),
    /// Generation failed part-way; completions gathered before the failure
    /// are preserved.
    #[error("generator failed after {} of the requested samples: {source}", .gathered.len())]
    Generator {
        source: GeneratorError,
        gathered: Vec<Completion>,
    },
}

/// A confidence record together with the completions that produced it; the
/// completions feed tree construction.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub record: ConfidenceRecord,
    pub completions: Vec<Completion>,
    /// Per-completion match outcome, aligned with `completions`.
    pub correct_flags: Vec<bool>,
}

/// The candidate answer a completion reconstructs: the prefix already in the
/// sequence plus the sampled continuation.
pub fn reconstruct_answer(prefix: &str, continuation: &str) -> String {
    if prefix.is_empty() {
        continuation.to_owned()
    } else if continuation.is_empty() {
        prefix.to_owned()
    } else if prefix.ends_with(char::is_whitespace)
        || continuation.starts_with(char::is_whitespace)
    {
        format!("{prefix}{continuation}")
    } else {
        format!("{prefix} {continuation}")
    }
}

/// Estimate the confidence of `seq` by sampling `plan.k` continuations.
///
/// Samples are issued in batches of `plan.config.n`; the raw confidence is
/// the exact fraction of reconstructed answers matching the gold answer.
pub fn estimate_confidence(
    question: &Question,
    seq: &SequenceState,
    plan: &SamplingPlan,
    gen: &dyn TextGenerator,
) -> Result<Estimate, EstimateError> {
    plan.validate()?;
    if seq.question_id != question.id {
        return Err(EstimateError::QuestionMismatch {
            expected: question.id.clone(),
            got: seq.question_id.clone(),
        });
    }
    if seq.kind == SequenceKind::QuestionWithAnswer {
        return Err(EstimateError::FullAnswerKind);
    }
    let prompt = seq.prompt_text(question);

    let mut completions: Vec<Completion> = Vec::with_capacity(plan.k as usize);
    let mut remaining = plan.k;
    while remaining > 0 {
        let batch = remaining.min(plan.config.n.max(1));
        let config = plan.config.clone().with_n(batch);
        match gen.generate(&prompt, &config) {
            Ok(batch_completions) => completions.extend(batch_completions),
            Err(source) => {
                return Err(EstimateError::Generator {
                    source,
                    gathered: completions,
                })
            }
        }
        remaining -= batch;
    }

    let mut correct_flags = Vec::with_capacity(completions.len());
    let mut n_correct = 0u32;
    for completion in &completions {
        let candidate = reconstruct_answer(&seq.prefix_text, &completion.text);
        let hit = match_answer(&candidate, &question.gold_answer, plan.matcher_kind)?;
        correct_flags.push(hit);
        if hit {
            n_correct += 1;
        }
    }

    let record = ConfidenceRecord::from_counts(seq.clone(), n_correct, plan.k)
        .expect("n_correct <= k by construction");
    Ok(Estimate {
        record,
        completions,
        correct_flags,
    })
}

/// Score a complete answer: 1.0 when it matches the gold answer, 0.0
/// otherwise. No sampling happens; `k_used` is 1 and `is_final_correct` is
/// set.
pub fn score_full_answer(
    question: &Question,
    seq: &SequenceState,
    matcher_kind: MatcherKind,
) -> Result<ConfidenceRecord, EstimateError> {
    if seq.kind != SequenceKind::QuestionWithAnswer {
        return Err(EstimateError::InvalidArgument(format!(
            "score_full_answer requires a complete answer, got {:?}",
            seq.kind
        )));
    }
    if seq.question_id != question.id {
        return Err(EstimateError::QuestionMismatch {
            expected: question.id.clone(),
            got: seq.question_id.clone(),
        });
    }
    let matched = if seq.prefix_text.trim().is_empty() {
        false
    } else {
        match_answer(&seq.prefix_text, &question.gold_answer, matcher_kind)?
    };
    let mut record = ConfidenceRecord::from_counts(seq.clone(), u32::from(matched), 1)
        .expect("counts are 0/1 of 1");
    record.is_final_correct = Some(matched);
    Ok(record)
}
