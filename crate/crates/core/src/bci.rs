//! Backward confidence integration: revise the confidence at a calibration
//! position by recursively folding in adjusted confidences of sampled
//! future positions.
//!
//! With revision coefficient `alpha`, width `w` and depth `d`, the adjusted
//! confidence of a position `h` levels above the horizon is
//!
//! ```text
//! adj(h) = raw(h)                                        at the horizon
//! adj(h) = alpha * raw(h) + (1 - alpha) * mean_b adj(b)  otherwise
//! ```
//!
//! where `b` ranges over `w` sampled continuations at the next calibration
//! position. `Rebranch` mode samples `w` branches at every level (the full
//! w-ary tree); `Path` mode samples `w` branches once and follows each as a
//! single path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMode {
    /// Branch `w` ways at every future level.
    Rebranch,
    /// Branch `w` ways once, then follow each branch as a single path.
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BciParams {
    /// Weight of the local estimate; `1 - alpha` goes to the future.
    pub alpha: f64,
    /// Sampled continuation paths per level.
    pub width: u32,
    /// Future calibration positions folded in.
    pub depth: u32,
    #[serde(default = "default_mode")]
    pub mode: BranchMode,
}

fn default_mode() -> BranchMode {
    BranchMode::Rebranch
}

#[derive(Debug, Error)]
pub enum BciError {
    #[error("alpha must be in [0, 1], got {0}")]
    InvalidAlpha(f64),
}

impl BciParams {
    pub fn new(alpha: f64, width: u32, depth: u32, mode: BranchMode) -> Result<Self, BciError> {
        let params = Self {
            alpha,
            width,
            depth,
            mode,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), BciError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(BciError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }

    /// Integration is a no-op when either width or depth is zero.
    pub fn is_trivial(&self) -> bool {
        self.width == 0 || self.depth == 0
    }
}

/// Result of one integration, with the adjusted value and whether any branch
/// terminated before the full depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integration {
    pub adjusted: f64,
    pub truncated_early: bool,
}

/// Produces the raw (local) confidence of a state.
pub type RawConfFn<'a, S, E> = dyn FnMut(&S) -> Result<f64, E> + 'a;
/// Extends a state to up to `w` states at the next calibration position.
pub type ContinuationFn<'a, S, E> = dyn FnMut(&S, u32) -> Result<Vec<S>, E> + 'a;

/// Compute the adjusted confidence of `seq`.
///
/// `raw_conf` returns the raw (local) confidence of a state; `continuations`
/// extends a state to up to `w` states at the next calibration position.
/// Branches are folded in fixed order, so results are reproducible whenever
/// the closures are. Fewer branches than requested are averaged as-is; zero
/// branches truncate the recursion at the local value.
pub fn integrate<S, E>(
    seq: &S,
    params: &BciParams,
    raw_conf: &mut RawConfFn<'_, S, E>,
    continuations: &mut ContinuationFn<'_, S, E>,
) -> Result<Integration, E> {
    debug_assert!(params.validate().is_ok(), "BciParams must be pre-validated");
    if params.is_trivial() || params.alpha == 1.0 {
        // Collapses to the local term; no continuations are sampled.
        let local = raw_conf(seq)?;
        return Ok(Integration {
            adjusted: local.clamp(0.0, 1.0),
            truncated_early: false,
        });
    }
    let (value, truncated) = fold(seq, params, params.depth, params.width, raw_conf, continuations)?;
    Ok(Integration {
        adjusted: value.clamp(0.0, 1.0),
        truncated_early: truncated,
    })
}

fn fold<S, E>(
    seq: &S,
    params: &BciParams,
    remaining: u32,
    width: u32,
    raw_conf: &mut RawConfFn<'_, S, E>,
    continuations: &mut ContinuationFn<'_, S, E>,
) -> Result<(f64, bool), E> {
    let local = raw_conf(seq)?;
    if remaining == 0 {
        return Ok((local, false));
    }
    let branches = continuations(seq, width)?;
    if branches.is_empty() {
        // Generation terminated; depth truncates here.
        return Ok((local, true));
    }
    let mut truncated = branches.len() < width as usize;
    let next_width = match params.mode {
        BranchMode::Rebranch => params.width,
        BranchMode::Path => 1,
    };
    let mut sum = 0.0;
    for branch in &branches {
        let (value, t) = fold(branch, params, remaining - 1, next_width, raw_conf, continuations)?;
        sum += value;
        truncated |= t;
    }
    let future = sum / branches.len() as f64;
    Ok((params.alpha * local + (1.0 - params.alpha) * future, truncated))
}
