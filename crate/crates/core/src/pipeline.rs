//! Progressive training-data construction: build a sampling tree over
//! answer prefixes, label every node with its Monte-Carlo confidence, and
//! emit the three supervision record kinds.
//!
//! Three expansion strategies trade cost for coverage. With `k` samples per
//! expansion, `m` clusters and at most `t` truncation levels, total
//! generator inferences are exactly:
//!
//! - `FullTree`:  sum of `k^i` for `i` in `1..=t+1` — every fragment expands
//! - `Clustered`: `k * sum of m^i` for `i` in `0..=t` — only cluster medoids
//!   expand
//! - `Linear`:    `k * (1 + m*t)` — medoids at the first level, then one
//!   representative per surviving branch
//!
//! [`build_tree`] measures its cost against [`predicted_cost`]; the two must
//! agree whenever no truncation-infeasible node occurs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{cluster_fragments, select_representative, ClusterError};
use crate::embed::Embedder;
use crate::generator::{CostSnapshot, TextGenerator};
use crate::mcsampler::{estimate_confidence, reconstruct_answer, EstimateError, SamplingPlan};
use crate::types::{Completion, FinishReason, Question, SequenceKind, SequenceState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompletionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FullTree,
    Clustered,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationRule {
    /// Cut at a level-proportional token position, snapped to a sentence
    /// boundary.
    SentenceFraction,
    /// Cut after the level-th blank-line paragraph separator.
    ParagraphBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Samples per node expansion.
    pub k: u32,
    /// Cluster count, `1 <= m <= k`.
    pub m: u32,
    /// Maximum truncation levels.
    pub t: u32,
    pub strategy: Strategy,
    pub truncation_rule: TruncationRule,
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::InvalidParams("k must be >= 1".into()));
        }
        if self.m == 0 || self.m > self.k {
            return Err(PipelineError::InvalidParams(format!(
                "m must satisfy 1 <= m <= k, got m={} k={}",
                self.m, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline params: {0}")]
    InvalidParams(String),
    #[error("answer cannot be truncated under the chosen rule: {0}")]
    TruncationInfeasible(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// One node of the sampling tree: an answer prefix, its confidence and the
/// completions sampled from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerTreeNode {
    pub id: NodeId,
    pub depth: u32,
    pub prefix: SequenceState,
    pub raw_conf: f64,
    pub n_correct: u32,
    pub k_used: u32,
    pub children: Vec<NodeId>,
    pub sampled_completions: Vec<CompletionId>,
    /// Set when the node came out of clustering: its cluster ordinal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub representative_of_cluster: Option<usize>,
}

/// Logged when clustering yielded fewer distinct fragments than `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveMReduction {
    pub node: NodeId,
    pub requested: u32,
    pub effective: u32,
}

/// The full sampling tree of one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerTree {
    pub question: Question,
    pub nodes: Vec<AnswerTreeNode>,
    /// Completion pool; nodes reference it by id.
    pub completions: Vec<Completion>,
    /// Whether each pooled completion reconstructs a correct answer.
    pub completion_correct: Vec<bool>,
    /// Generator cost measured across the whole build.
    pub ledger: CostSnapshot,
    /// True when some node could not be truncated and became a leaf; the
    /// cost formula check does not apply then.
    pub truncation_shortfall: bool,
    pub effective_m_reductions: Vec<EffectiveMReduction>,
}

impl AnswerTree {
    pub fn root(&self) -> &AnswerTreeNode {
        &self.nodes[0]
    }

    pub fn completion(&self, id: CompletionId) -> &Completion {
        &self.completions[id.0]
    }
}

/// Closed-form inference count of a build, per strategy.
pub fn predicted_cost(params: &PipelineParams) -> u64 {
    let k = u128::from(params.k);
    let m = u128::from(params.m);
    let t = params.t;
    let total: u128 = match params.strategy {
        Strategy::FullTree => (1..=t + 1).map(|i| k.pow(i)).sum(),
        Strategy::Clustered => (0..=t).map(|i| k * m.pow(i)).sum(),
        Strategy::Linear => k * (1 + m * u128::from(t)),
    };
    u64::try_from(total).unwrap_or(u64::MAX)
}

/// Char-end offsets (exclusive, bytes) of sentence boundaries in `text`:
/// `.`, `!` or `?` followed by whitespace or end-of-text, and newlines.
fn sentence_boundaries(text: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let bytes = text.char_indices().collect::<Vec<_>>();
    for (pos, (byte, ch)) in bytes.iter().enumerate() {
        match ch {
            '.' | '!' | '?' => {
                let next = bytes.get(pos + 1).map(|(_, c)| *c);
                if next.is_none() || next.is_some_and(char::is_whitespace) {
                    ends.push(byte + ch.len_utf8());
                }
            }
            '\n' => ends.push(byte + ch.len_utf8()),
            _ => {}
        }
    }
    ends
}

/// Byte ranges of paragraphs split on blank lines.
fn paragraph_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0usize;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                if !text[start..i].trim().is_empty() {
                    ranges.push((start, i));
                }
                while j < bytes.len() && (bytes[j] as char).is_ascii_whitespace() {
                    j += 1;
                }
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    if !text[start..].trim().is_empty() {
        ranges.push((start, text.len()));
    }
    ranges
}

fn whitespace_token_byte_ends(text: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut in_token = false;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            in_token = false;
        } else {
            if in_token {
                ends.pop();
            }
            in_token = true;
            ends.push(i + ch.len_utf8());
        }
    }
    ends
}

/// Cut a complete answer into a partial-answer prefix for truncation level
/// `level` (1-based, at most `t`).
///
/// `SentenceFraction` cuts at token position `round(level * n / (t + 1))`
/// snapped forward to the next internal sentence boundary (backward when
/// none remains). `ParagraphBoundary` cuts after the level-th paragraph.
/// The result is a non-empty strict prefix of the answer text.
pub fn truncate(
    answer: &Completion,
    rule: TruncationRule,
    level: u32,
    t: u32,
) -> Result<String, PipelineError> {
    if level == 0 || level > t {
        return Err(PipelineError::InvalidParams(format!(
            "truncation level must satisfy 1 <= level <= t, got level={level} t={t}"
        )));
    }
    let text = answer.text.as_str();
    if text.trim().is_empty() {
        return Err(PipelineError::TruncationInfeasible("empty answer".into()));
    }
    let cut_end = match rule {
        TruncationRule::SentenceFraction => {
            let token_ends = whitespace_token_byte_ends(text);
            let n = token_ends.len();
            if n == 0 {
                return Err(PipelineError::TruncationInfeasible("no tokens".into()));
            }
            // Boundaries strictly inside the text: the final sentence end is
            // not a valid cut (the prefix must be strict).
            let internal: Vec<usize> = sentence_boundaries(text)
                .into_iter()
                .filter(|&e| !text[e..].trim().is_empty())
                .collect();
            if internal.is_empty() {
                return Err(PipelineError::TruncationInfeasible(
                    "answer has fewer than 2 sentences".into(),
                ));
            }
            let cut_tokens =
                ((f64::from(level) * n as f64) / f64::from(t + 1)).round().max(1.0) as usize;
            let cut_byte = token_ends[cut_tokens.min(n) - 1];
            match internal.iter().find(|&&e| e >= cut_byte) {
                Some(&e) => e,
                None => *internal.last().expect("non-empty"),
            }
        }
        TruncationRule::ParagraphBoundary => {
            let paragraphs = paragraph_ranges(text);
            if paragraphs.len() < level as usize + 1 {
                return Err(PipelineError::TruncationInfeasible(format!(
                    "answer has {} paragraph(s), need at least {}",
                    paragraphs.len(),
                    level + 1
                )));
            }
            paragraphs[level as usize - 1].1
        }
    };
    let prefix = text[..cut_end].trim_end();
    if prefix.is_empty() || prefix.len() >= text.trim_end().len() {
        return Err(PipelineError::TruncationInfeasible(
            "cut does not produce a strict non-empty prefix".into(),
        ));
    }
    Ok(prefix.to_owned())
}

/// Build the sampling tree for one question.
///
/// The root is the bare question; every created node is expanded with
/// `params.k` samples, and nodes below depth `t` spawn children according to
/// the strategy. The caller must give the build exclusive use of `gen` for
/// the cost measurement to be meaningful.
pub fn build_tree(
    question: &Question,
    params: &PipelineParams,
    plan: &SamplingPlan,
    gen: &dyn TextGenerator,
    embedder: &dyn Embedder,
) -> Result<AnswerTree, PipelineError> {
    params.validate()?;
    if plan.k != params.k {
        return Err(PipelineError::InvalidParams(format!(
            "sampling plan k={} disagrees with pipeline k={}",
            plan.k, params.k
        )));
    }
    let ledger_before = gen.ledger().snapshot();

    let mut nodes: Vec<AnswerTreeNode> = Vec::new();
    let mut completions: Vec<Completion> = Vec::new();
    let mut completion_correct: Vec<bool> = Vec::new();
    let mut truncation_shortfall = false;
    let mut effective_m_reductions = Vec::new();

    nodes.push(AnswerTreeNode {
        id: NodeId(0),
        depth: 0,
        prefix: SequenceState::question(&question.id),
        raw_conf: 0.0,
        n_correct: 0,
        k_used: 0,
        children: Vec::new(),
        sampled_completions: Vec::new(),
        representative_of_cluster: None,
    });

    let mut frontier = vec![NodeId(0)];
    for depth in 0..=params.t {
        let mut next_frontier = Vec::new();
        for node_id in frontier {
            // Expand: sample k continuations and score them.
            let estimate = estimate_confidence(question, &nodes[node_id.0].prefix, plan, gen)?;
            let completion_ids: Vec<CompletionId> = estimate
                .completions
                .iter()
                .enumerate()
                .map(|(i, _)| CompletionId(completions.len() + i))
                .collect();
            completions.extend(estimate.completions);
            completion_correct.extend(estimate.correct_flags);
            {
                let node = &mut nodes[node_id.0];
                node.raw_conf = estimate.record.raw_conf;
                node.n_correct = estimate.record.n_correct;
                node.k_used = estimate.record.k_used;
                node.sampled_completions = completion_ids.clone();
            }

            if depth == params.t {
                continue;
            }
            let level = depth + 1;
            let sampled: Vec<&Completion> = completion_ids
                .iter()
                .map(|&cid| &completions[cid.0])
                .collect();

            // Which fragments become children, per strategy.
            let child_specs: Vec<ChildSpec> = match params.strategy {
                Strategy::FullTree => {
                    let mut specs = Vec::with_capacity(sampled.len());
                    let mut infeasible = false;
                    for completion in &sampled {
                        match truncate(completion, params.truncation_rule, level, params.t) {
                            Ok(frag) => specs.push((frag, None)),
                            Err(PipelineError::TruncationInfeasible(reason)) => {
                                log::warn!(
                                    "question {}: node {} becomes a leaf ({reason})",
                                    question.id,
                                    node_id.0
                                );
                                infeasible = true;
                                break;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    if infeasible {
                        truncation_shortfall = true;
                        continue;
                    }
                    specs
                }
                Strategy::Clustered => {
                    match clustered_specs(
                        question,
                        node_id,
                        &sampled,
                        params,
                        level,
                        embedder,
                        &mut effective_m_reductions,
                    )? {
                        Some(specs) => specs,
                        None => {
                            truncation_shortfall = true;
                            continue;
                        }
                    }
                }
                Strategy::Linear => {
                    if level == 1 {
                        match clustered_specs(
                            question,
                            node_id,
                            &sampled,
                            params,
                            level,
                            embedder,
                            &mut effective_m_reductions,
                        )? {
                            Some(specs) => specs,
                            None => {
                                truncation_shortfall = true;
                                continue;
                            }
                        }
                    } else {
                        // One representative per surviving branch.
                        let texts: Vec<&str> =
                            sampled.iter().map(|c| c.text.as_str()).collect();
                        let rep = select_representative(&texts, embedder)?;
                        match truncate(sampled[rep], params.truncation_rule, level, params.t) {
                            Ok(frag) => vec![(frag, None)],
                            Err(PipelineError::TruncationInfeasible(reason)) => {
                                log::warn!(
                                    "question {}: node {} becomes a leaf ({reason})",
                                    question.id,
                                    node_id.0
                                );
                                truncation_shortfall = true;
                                continue;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            };

            let parent_prefix = nodes[node_id.0].prefix.prefix_text.clone();
            for (fragment, cluster_ordinal) in child_specs {
                let child_prefix = reconstruct_answer(&parent_prefix, &fragment);
                let child_id = NodeId(nodes.len());
                let prefix_state = SequenceState::partial(&question.id, child_prefix, level - 1)
                    .expect("fragments are non-empty");
                nodes.push(AnswerTreeNode {
                    id: child_id,
                    depth: level,
                    prefix: prefix_state,
                    raw_conf: 0.0,
                    n_correct: 0,
                    k_used: 0,
                    children: Vec::new(),
                    sampled_completions: Vec::new(),
                    representative_of_cluster: cluster_ordinal,
                });
                nodes[node_id.0].children.push(child_id);
                next_frontier.push(child_id);
            }
        }
        frontier = next_frontier;
        if frontier.is_empty() {
            break;
        }
    }

    let ledger = gen.ledger().snapshot().delta_since(&ledger_before);
    Ok(AnswerTree {
        question: question.clone(),
        nodes,
        completions,
        completion_correct,
        ledger,
        truncation_shortfall,
        effective_m_reductions,
    })
}

/// A planned child: its prefix fragment and, when it came from clustering,
/// its cluster ordinal.
type ChildSpec = (String, Option<usize>);

/// Truncate every sampled completion, cluster the fragments into `m` groups
/// and keep each cluster's medoid. `None` means a truncation-infeasible
/// completion turned the node into a leaf.
#[allow(clippy::too_many_arguments)]
fn clustered_specs(
    question: &Question,
    node_id: NodeId,
    sampled: &[&Completion],
    params: &PipelineParams,
    level: u32,
    embedder: &dyn Embedder,
    reductions: &mut Vec<EffectiveMReduction>,
) -> Result<Option<Vec<ChildSpec>>, PipelineError> {
    let mut fragments = Vec::with_capacity(sampled.len());
    for completion in sampled {
        match truncate(completion, params.truncation_rule, level, params.t) {
            Ok(frag) => fragments.push(frag),
            Err(PipelineError::TruncationInfeasible(reason)) => {
                log::warn!(
                    "question {}: node {} becomes a leaf ({reason})",
                    question.id,
                    node_id.0
                );
                return Ok(None);
            }
            Err(e) => return Err(e),
        }
    }
    let clusters = cluster_fragments(&fragments, params.m as usize, embedder)?;
    if clusters.len() < params.m as usize {
        log::warn!(
            "question {}: node {} produced {} distinct fragment groups, requested m={}",
            question.id,
            node_id.0,
            clusters.len(),
            params.m
        );
        reductions.push(EffectiveMReduction {
            node: node_id,
            requested: params.m,
            effective: clusters.len() as u32,
        });
    }
    Ok(Some(
        clusters
            .into_iter()
            .enumerate()
            .map(|(ordinal, c)| (fragments[c.medoid].clone(), Some(ordinal)))
            .collect(),
    ))
}

/// One emitted supervision record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub kind: SequenceKind,
    pub input_text: String,
    pub target_confidence: f64,
    pub provenance: NodeId,
    pub question_id: String,
}

impl TrainingExample {
    /// Stable JSONL rendering; the target is rendered to two decimals.
    pub fn to_jsonl_line(&self) -> String {
        let kind = match self.kind {
            SequenceKind::Question => "question",
            SequenceKind::QuestionWithPartialAnswer => "question_with_partial_answer",
            SequenceKind::QuestionWithAnswer => "question_with_answer",
        };
        format!(
            "{{\"kind\":{},\"input\":{},\"target_confidence\":{:.2},\"question_id\":{},\"node_id\":{}}}",
            serde_json::to_string(kind).expect("string"),
            serde_json::to_string(&self.input_text).expect("string"),
            self.target_confidence,
            serde_json::to_string(&self.question_id).expect("string"),
            self.provenance.0,
        )
    }
}

/// The instruction wrapper around a (possibly empty) answer prefix.
pub fn render_input(question_text: &str, prefix_text: &str) -> String {
    format!(
        "Question: {question_text}\n{prefix_text}\nHow likely is the above to lead to a correct final answer? Confidence:"
    )
}

/// Emit the three training-data kinds from a built tree: one question-level
/// example, one partial-answer example per expanded non-root node, and one
/// full-answer example per completed sampled answer.
pub fn emit_training_data(tree: &AnswerTree) -> Vec<TrainingExample> {
    let mut out = Vec::new();
    let question = &tree.question;
    for node in &tree.nodes {
        if node.k_used == 0 {
            continue; // never expanded (should not happen in a finished tree)
        }
        let kind = if node.depth == 0 {
            SequenceKind::Question
        } else {
            SequenceKind::QuestionWithPartialAnswer
        };
        out.push(TrainingExample {
            kind,
            input_text: render_input(&question.text, &node.prefix.prefix_text),
            target_confidence: node.raw_conf,
            provenance: node.id,
            question_id: question.id.clone(),
        });
    }
    for node in &tree.nodes {
        for &cid in &node.sampled_completions {
            let completion = tree.completion(cid);
            if completion.finish_reason != FinishReason::Stop {
                continue; // truncated generations are not complete answers
            }
            let full = reconstruct_answer(&node.prefix.prefix_text, &completion.text);
            let target = if tree.completion_correct[cid.0] { 1.0 } else { 0.0 };
            out.push(TrainingExample {
                kind: SequenceKind::QuestionWithAnswer,
                input_text: render_input(&question.text, &full),
                target_confidence: target,
                provenance: node.id,
                question_id: question.id.clone(),
            });
        }
    }
    out
}
