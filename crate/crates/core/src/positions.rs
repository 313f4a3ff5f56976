//! Calibration-position selection: where along a generation to estimate
//! confidence.
//!
//! Three strategies are provided. Paragraph-end calibration fires at blank
//! lines and end-of-text; periodic calibration fires every `interval`
//! tokens; entropy calibration fires where the token distribution's entropy
//! exceeds a threshold, collapsing consecutive bursts to one position.
//!
//! Token offsets index the completion's effective token view: the
//! generator-reported tokens when they align with the text, whitespace
//! words otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{token_entropy, GeneratorError};
use crate::types::Completion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionTrigger {
    ParagraphEnd,
    Periodic,
    Entropy,
}

/// A point in a completion where confidence is estimated. `token_offset` is
/// the 0-based index of the last token included; `char_offset` is the number
/// of characters in the included prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationPosition {
    pub token_offset: usize,
    pub char_offset: usize,
    pub trigger: PositionTrigger,
}

#[derive(Debug, Error)]
pub enum PositionError {
    #[error("completion has no text or tokens")]
    Empty,
    #[error("interval must be >= 1")]
    InvalidInterval,
    #[error(transparent)]
    Capability(#[from] GeneratorError),
    #[error("generator-reported tokens do not align with the completion text")]
    TokenAlignment,
}

/// Slice the first `char_offset` characters of `text`.
pub fn prefix_slice(text: &str, char_offset: usize) -> &str {
    match text.char_indices().nth(char_offset) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}

/// The effective token view of a completion: generator tokens when they can
/// be aligned to the text, whitespace words otherwise. Returns the char-end
/// offset (exclusive, in characters) of each token.
fn effective_token_ends(completion: &Completion) -> Result<Vec<usize>, PositionError> {
    if !completion.tokens.is_empty() {
        if let Some(ends) = align_tokens(&completion.text, &completion.tokens) {
            return Ok(ends);
        }
    }
    let ends = whitespace_token_ends(&completion.text);
    if ends.is_empty() {
        return Err(PositionError::Empty);
    }
    Ok(ends)
}

/// Greedy alignment of reported tokens onto the text: each token must match
/// at the cursor, optionally after skipping whitespace. Returns char-end
/// offsets, or None when the tokens do not correspond to the text.
fn align_tokens(text: &str, tokens: &[String]) -> Option<Vec<usize>> {
    let chars: Vec<char> = text.chars().collect();
    let mut cursor = 0usize;
    let mut ends = Vec::with_capacity(tokens.len());
    for token in tokens {
        let tok_chars: Vec<char> = token.chars().collect();
        if tok_chars.is_empty() {
            return None;
        }
        let matches_at = |start: usize| -> bool {
            chars.len() - start >= tok_chars.len()
                && chars[start..start + tok_chars.len()] == tok_chars[..]
        };
        let start = if matches_at(cursor) {
            cursor
        } else {
            let mut skipped = cursor;
            while skipped < chars.len() && chars[skipped].is_whitespace() {
                skipped += 1;
            }
            if skipped == cursor || !matches_at(skipped) {
                return None;
            }
            skipped
        };
        cursor = start + tok_chars.len();
        ends.push(cursor);
    }
    Some(ends)
}

fn whitespace_token_ends(text: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut in_token = false;
    for (i, ch) in text.chars().enumerate() {
        if ch.is_whitespace() {
            in_token = false;
        } else {
            if in_token {
                ends.pop();
            }
            in_token = true;
            ends.push(i + 1);
        }
    }
    ends
}

/// Char offsets (into the text) where a blank-line paragraph separator
/// begins: a newline followed, possibly after spaces or tabs, by another
/// newline.
fn paragraph_breaks(text: &str) -> Vec<usize> {
    let chars: Vec<char> = text.chars().collect();
    let mut breaks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '\n' {
            let mut j = i + 1;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                j += 1;
            }
            if j < chars.len() && chars[j] == '\n' {
                breaks.push(i);
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                i = j;
                continue;
            }
        }
        i += 1;
    }
    breaks
}

/// One position at each paragraph separator plus one at end-of-text,
/// deduplicated.
pub fn paragraph_positions(
    completion: &Completion,
) -> Result<Vec<CalibrationPosition>, PositionError> {
    if completion.text.trim().is_empty() {
        return Err(PositionError::Empty);
    }
    let ends = effective_token_ends(completion)?;
    let mut offsets: Vec<usize> = Vec::new();
    for brk in paragraph_breaks(&completion.text) {
        // Last token fully before the separator.
        let idx = match ends.partition_point(|&e| e <= brk) {
            0 => continue, // separator before any token
            p => p - 1,
        };
        offsets.push(idx);
    }
    offsets.push(ends.len() - 1);
    offsets.sort_unstable();
    offsets.dedup();
    Ok(offsets
        .into_iter()
        .map(|token_offset| CalibrationPosition {
            token_offset,
            char_offset: ends[token_offset],
            trigger: PositionTrigger::ParagraphEnd,
        })
        .collect())
}

/// Positions every `interval` tokens, plus end-of-text when not already
/// included.
pub fn periodic_positions(
    completion: &Completion,
    interval: usize,
) -> Result<Vec<CalibrationPosition>, PositionError> {
    if interval == 0 {
        return Err(PositionError::InvalidInterval);
    }
    let ends = effective_token_ends(completion)?;
    let n = ends.len();
    let mut offsets: Vec<usize> = (1..)
        .map(|j| j * interval)
        .take_while(|&pos| pos <= n)
        .map(|pos| pos - 1)
        .collect();
    if offsets.last() != Some(&(n - 1)) {
        offsets.push(n - 1);
    }
    Ok(offsets
        .into_iter()
        .map(|token_offset| CalibrationPosition {
            token_offset,
            char_offset: ends[token_offset],
            trigger: PositionTrigger::Periodic,
        })
        .collect())
}

/// One position at each token whose top-k entropy exceeds `threshold`;
/// consecutive qualifying tokens collapse to the last of the run.
pub fn entropy_positions(
    completion: &Completion,
    threshold: f64,
) -> Result<Vec<CalibrationPosition>, PositionError> {
    if completion.top_logprobs.is_none() {
        return Err(PositionError::Capability(
            GeneratorError::UnsupportedCapability("token-level top_logprobs"),
        ));
    }
    if completion.tokens.is_empty() {
        return Err(PositionError::Empty);
    }
    let ends = align_tokens(&completion.text, &completion.tokens)
        .ok_or(PositionError::TokenAlignment)?;
    let n = completion.tokens.len();
    let mut positions = Vec::new();
    let mut prev_hot = false;
    for i in 0..n {
        let hot = token_entropy(completion, i)? > threshold;
        if prev_hot && !hot {
            positions.push(i - 1);
        }
        prev_hot = hot;
    }
    if prev_hot {
        positions.push(n - 1);
    }
    Ok(positions
        .into_iter()
        .map(|token_offset| CalibrationPosition {
            token_offset,
            char_offset: ends[token_offset],
            trigger: PositionTrigger::Entropy,
        })
        .collect())
}

/// Fraction of the completion's tokens included up to `position`.
pub fn token_ratio(position: &CalibrationPosition, completion: &Completion) -> f64 {
    let n = match effective_token_ends(completion) {
        Ok(ends) => ends.len(),
        Err(_) => return 1.0,
    };
    (position.token_offset + 1) as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{FinishReason, TokenAlternative};

    fn text_completion(text: &str) -> Completion {
        Completion::from_text(text)
    }

    fn offsets(positions: &[CalibrationPosition]) -> Vec<usize> {
        positions.iter().map(|p| p.token_offset).collect()
    }

    #[test]
    fn paragraph_positions_three_paragraphs() {
        let c = text_completion("one two three.\n\nfour five.\n\nsix seven eight.");
        let pos = paragraph_positions(&c).unwrap();
        assert_eq!(offsets(&pos), vec![2, 4, 7]);
        assert_eq!(pos.len(), 3);
    }

    #[test]
    fn paragraph_positions_single_paragraph() {
        let c = text_completion("just one paragraph here.");
        let pos = paragraph_positions(&c).unwrap();
        assert_eq!(offsets(&pos), vec![3]);
    }

    #[test]
    fn paragraph_positions_letter_example() {
        let c = text_completion("A\n\nB\n\nC");
        let pos = paragraph_positions(&c).unwrap();
        assert_eq!(offsets(&pos), vec![0, 1, 2]);
        // char offsets point at the end of each letter
        assert_eq!(pos[0].char_offset, 1);
        assert_eq!(prefix_slice(&c.text, pos[1].char_offset), "A\n\nB");
    }

    #[test]
    fn periodic_positions_arithmetic() {
        let text: String = (0..100).map(|i| format!("t{i} ")).collect();
        let c = text_completion(text.trim_end());
        assert_eq!(offsets(&periodic_positions(&c, 50).unwrap()), vec![49, 99]);

        let text: String = (0..30).map(|i| format!("t{i} ")).collect();
        let c = text_completion(text.trim_end());
        assert_eq!(offsets(&periodic_positions(&c, 30).unwrap()), vec![29]);

        let text: String = (0..10).map(|i| format!("t{i} ")).collect();
        let c = text_completion(text.trim_end());
        assert_eq!(offsets(&periodic_positions(&c, 50).unwrap()), vec![9]);
    }

    #[test]
    fn periodic_rejects_zero_interval() {
        let c = text_completion("a b c");
        assert!(matches!(
            periodic_positions(&c, 0),
            Err(PositionError::InvalidInterval)
        ));
    }

    fn completion_with_entropies(entropic: &[bool]) -> Completion {
        let tokens: Vec<String> = (0..entropic.len()).map(|i| format!("w{i}")).collect();
        let text = tokens.join(" ");
        let half = 0.5f64.ln();
        let top: Vec<Vec<TokenAlternative>> = entropic
            .iter()
            .zip(&tokens)
            .map(|(&hot, tok)| {
                if hot {
                    vec![
                        TokenAlternative {
                            token: tok.clone(),
                            logprob: half,
                        },
                        TokenAlternative {
                            token: "~".into(),
                            logprob: half,
                        },
                    ]
                } else {
                    vec![TokenAlternative {
                        token: tok.clone(),
                        logprob: 0.0,
                    }]
                }
            })
            .collect();
        Completion::new(text, tokens, None, Some(top), FinishReason::Stop).unwrap()
    }

    #[test]
    fn entropy_positions_flags_and_collapses() {
        // All point-mass: nothing fires even at threshold 1e-10.
        let calm = completion_with_entropies(&[false, false, false]);
        assert!(entropy_positions(&calm, 1e-10).unwrap().is_empty());

        // Single two-way token above 0.5 fires exactly there.
        let one = completion_with_entropies(&[false, true, false]);
        assert_eq!(offsets(&entropy_positions(&one, 0.5).unwrap()), vec![1]);

        // Three consecutive hot tokens collapse to the last.
        let burst = completion_with_entropies(&[false, true, true, true, false]);
        assert_eq!(offsets(&entropy_positions(&burst, 0.5).unwrap()), vec![3]);

        // Oracle: independent scan without collapsing, then group runs.
        let pattern = [true, true, false, true, false, true, true];
        let c = completion_with_entropies(&pattern);
        let mut expected = Vec::new();
        let mut run_end: Option<usize> = None;
        for (i, &hot) in pattern.iter().enumerate() {
            if hot {
                run_end = Some(i);
            } else if let Some(e) = run_end.take() {
                expected.push(e);
            }
        }
        if let Some(e) = run_end {
            expected.push(e);
        }
        assert_eq!(offsets(&entropy_positions(&c, 0.5).unwrap()), expected);
    }

    #[test]
    fn entropy_requires_logprobs() {
        let c = text_completion("plain text");
        assert!(matches!(
            entropy_positions(&c, 0.5),
            Err(PositionError::Capability(_))
        ));
    }

    #[test]
    fn entropy_threshold_extremes() {
        let c = completion_with_entropies(&[true, false, true, true]);
        assert!(entropy_positions(&c, f64::INFINITY).unwrap().is_empty());
        // Negative threshold: every token qualifies, one run, collapsed to
        // the last token.
        assert_eq!(offsets(&entropy_positions(&c, -1.0).unwrap()), vec![3]);
    }

    #[test]
    fn token_ratio_examples() {
        let text: String = (0..100).map(|i| format!("t{i} ")).collect();
        let c = text_completion(text.trim_end());
        let p = CalibrationPosition {
            token_offset: 29,
            char_offset: 0,
            trigger: PositionTrigger::Periodic,
        };
        assert_eq!(token_ratio(&p, &c), 0.30);

        let end = periodic_positions(&c, 100).unwrap();
        assert_eq!(token_ratio(&end[0], &c), 1.0);

        let c4 = text_completion("a b c d");
        let first = CalibrationPosition {
            token_offset: 0,
            char_offset: 1,
            trigger: PositionTrigger::Periodic,
        };
        assert_eq!(token_ratio(&first, &c4), 0.25);
    }

    #[test]
    fn all_strategies_sorted_and_bounded() {
        let c = text_completion("alpha beta gamma.\n\ndelta epsilon zeta.\n\nand the end here.");
        let n = c.tokens.len();
        for pos in [
            paragraph_positions(&c).unwrap(),
            periodic_positions(&c, 2).unwrap(),
        ] {
            assert!(pos.windows(2).all(|w| w[0].token_offset < w[1].token_offset));
            assert!(pos.iter().all(|p| p.token_offset < n));
        }
    }

    #[test]
    fn periodic_interval_at_least_n_yields_only_end() {
        let c = text_completion("a b c d e");
        for interval in [5usize, 6, 100] {
            let pos = periodic_positions(&c, interval).unwrap();
            assert_eq!(offsets(&pos), vec![4]);
        }
    }

    #[test]
    fn alignment_handles_leading_space_tokens() {
        // Subword-style tokens that carry their own whitespace.
        let tokens: Vec<String> = vec!["Hel".into(), "lo".into(), " wor".into(), "ld".into()];
        let c = Completion::new("Hello world", tokens, None, None, FinishReason::Stop).unwrap();
        let pos = periodic_positions(&c, 2).unwrap();
        assert_eq!(offsets(&pos), vec![1, 3]);
        assert_eq!(prefix_slice(&c.text, pos[0].char_offset), "Hello");
    }

    #[test]
    fn misaligned_tokens_fall_back_to_words() {
        let tokens: Vec<String> = vec!["completely".into(), "different".into()];
        let c = Completion::new("alpha beta gamma", tokens, None, None, FinishReason::Stop)
            .unwrap();
        // Falls back to the 3 whitespace words.
        let pos = periodic_positions(&c, 1).unwrap();
        assert_eq!(offsets(&pos), vec![0, 1, 2]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn positions_strictly_increasing(words in prop::collection::vec("[a-z]{1,6}", 1..40),
                                             interval in 1usize..20) {
                let text = words.join(" ");
                let c = text_completion(&text);
                let pos = periodic_positions(&c, interval).unwrap();
                prop_assert!(pos.windows(2).all(|w| w[0].token_offset < w[1].token_offset));
                prop_assert_eq!(pos.last().unwrap().token_offset, words.len() - 1);
            }
        }
    }
}
