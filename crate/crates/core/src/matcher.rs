//! Answer matching: the indicator that decides whether a sampled answer
//! counts as correct.
//!
//! Two semantics are supported. `ExactNormalized` compares lowercased,
//! whitespace-collapsed, punctuation-stripped strings. `NumericFinalAnswer`
//! extracts the last numeric literal from each string and compares the two
//! as exact rationals — decimal strings are never routed through floating
//! point, so `"42.0"` equals `"42"` and `"0.1"` never drifts.

use num_bigint::BigInt;
use regex::Regex;
use std::sync::OnceLock;
use thiserror::Error;

use crate::types::MatcherKind;

#[derive(Debug, Error)]
pub enum MatchError {
    /// The gold answer carries no numeric literal; this is a configuration
    /// problem, not a property of the candidate.
    #[error("gold answer contains no numeric literal: {0:?}")]
    GoldNotNumeric(String),
}

/// Decide whether `candidate` matches `gold` under the given semantics.
///
/// An empty (or whitespace-only) candidate never matches. A candidate with
/// no numeric literal under `NumericFinalAnswer` is simply wrong, not an
/// error; a gold answer with no numeric literal is an error.
pub fn match_answer(
    candidate: &str,
    gold: &str,
    kind: MatcherKind,
) -> Result<bool, MatchError> {
    match kind {
        MatcherKind::ExactNormalized => {
            let c = normalize(candidate);
            if c.is_empty() {
                return Ok(false);
            }
            Ok(c == normalize(gold))
        }
        MatcherKind::NumericFinalAnswer => {
            let g = last_numeric_literal(gold)
                .ok_or_else(|| MatchError::GoldNotNumeric(gold.to_owned()))?;
            Ok(match last_numeric_literal(candidate) {
                Some(c) => c == g,
                None => false,
            })
        }
    }
}

/// Lowercase, drop everything that is neither alphanumeric nor whitespace,
/// collapse whitespace runs to single spaces.
fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for ch in s.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else if ch.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(ch.to_lowercase());
        }
        // punctuation and symbols are dropped entirely
    }
    out
}

/// A decimal literal held exactly: `value = sign * digits / 10^scale`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Decimal {
    numerator: BigInt,
    scale: u32,
}

impl Decimal {
    fn parse(text: &str, negative: bool) -> Option<Self> {
        let cleaned: String = text.chars().filter(|c| *c != ',').collect();
        let (int_part, frac_part) = match cleaned.split_once('.') {
            Some((i, f)) => (i, f),
            None => (cleaned.as_str(), ""),
        };
        let digits = format!("{int_part}{frac_part}");
        if digits.is_empty() {
            return None;
        }
        let mut numerator = BigInt::parse_bytes(digits.as_bytes(), 10)?;
        if negative {
            numerator = -numerator;
        }
        Some(Self {
            numerator,
            scale: u32::try_from(frac_part.len()).ok()?,
        })
    }

    /// Exact rational equality via cross-scaling.
    fn eq_rational(&self, other: &Self) -> bool {
        let ten = BigInt::from(10);
        let left = &self.numerator * ten.pow(other.scale);
        let right = &other.numerator * ten.pow(self.scale);
        left == right
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        // Only equality is needed; implement via eq_rational.
        if self.eq_rational(other) {
            Some(std::cmp::Ordering::Equal)
        } else {
            None
        }
    }
}

fn numeric_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // Thousands-separated form first (leftmost-first alternation), then
        // plain integers/decimals, then bare fractions like ".5".
        Regex::new(r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+").expect("static regex")
    })
}

/// Extract the last numeric literal of `s` as an exact decimal, honoring a
/// leading minus sign when it is not glued to an identifier (so `"-4"` in
/// `"equals -4"` is negative, but the dash in `"x-4"` is not a sign).
fn last_numeric_literal(s: &str) -> Option<Decimal> {
    let m = numeric_regex().find_iter(s).last()?;
    let mut negative = false;
    let before = &s[..m.start()];
    if let Some(prev) = before.chars().last() {
        if prev == '-' {
            let before_sign = &before[..before.len() - prev.len_utf8()];
            negative = !before_sign
                .chars()
                .last()
                .is_some_and(|c| c.is_alphanumeric() || c == '.');
        }
    }
    Decimal::parse(m.as_str(), negative)
}
