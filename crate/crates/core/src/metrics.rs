//! Calibration and discrimination metrics: ECE over equal-width bins,
//! rank-based AUROC with ties scored 0.5, accuracy, selective-prediction
//! filtering, reliability-diagram export, and the first-token-probability
//! baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Completion;

/// Where in the generation a prediction was made, following the usual
/// first / penultimate / final paragraph split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionTag {
    P1,
    #[serde(rename = "pz_minus_1")]
    PzMinus1,
    Final,
}

/// A confidence paired with the eventual correctness of its answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub confidence: f64,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_tag: Option<PositionTag>,
}

impl LabeledPrediction {
    pub fn new(confidence: f64, correct: bool) -> Self {
        Self {
            confidence,
            correct,
            position_tag: None,
        }
    }

    pub fn tagged(confidence: f64, correct: bool, tag: PositionTag) -> Self {
        Self {
            confidence,
            correct,
            position_tag: Some(tag),
        }
    }
}

/// One reliability-diagram bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_conf: f64,
    pub empirical_acc: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ece: f64,
    /// None when the predictions are single-class.
    pub auroc: Option<f64>,
    pub accuracy: f64,
    pub n: usize,
    pub bins: Vec<ReliabilityBin>,
}

impl MetricReport {
    /// CSV rows for the reliability diagram: lower,upper,mean_conf,acc,count.
    pub fn bins_to_csv(&self) -> String {
        let mut out = String::from("lower,upper,mean_conf,acc,count\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lower, b.upper, b.mean_conf, b.empirical_acc, b.count
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("predictions are empty")]
    EmptyInput,
    #[error("num_bins must be >= 1")]
    InvalidBins,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("AUROC undefined: all predictions are one class")]
    SingleClass,
    #[error("completion has no token logprobs")]
    MissingLogprobs,
}

fn validate(preds: &[LabeledPrediction]) -> Result<(), MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for p in preds {
        if !(0.0..=1.0).contains(&p.confidence) || p.confidence.is_nan() {
            return Err(MetricsError::InvalidConfidence(p.confidence));
        }
    }
    Ok(())
}

/// Right-closed bin index: bin `i` covers `(i/B, (i+1)/B]`, with 0.0 (and
/// anything rounding there) in the first bin and 1.0 in the last.
fn bin_index(confidence: f64, num_bins: usize) -> usize {
    if confidence <= 0.0 {
        return 0;
    }
    let idx = (confidence * num_bins as f64).ceil() as usize;
    idx.saturating_sub(1).min(num_bins - 1)
}

/// Expected calibration error over `num_bins` equal-width bins.
pub fn ece(preds: &[LabeledPrediction], num_bins: usize) -> Result<f64, MetricsError> {
    Ok(ece_with_bins(preds, num_bins)?.0)
}

/// ECE plus the reliability bins it was computed from. Empty bins carry
/// their midpoint as `mean_conf` and contribute nothing.
pub fn ece_with_bins(
    preds: &[LabeledPrediction],
    num_bins: usize,
) -> Result<(f64, Vec<ReliabilityBin>), MetricsError> {
    if num_bins == 0 {
        return Err(MetricsError::InvalidBins);
    }
    validate(preds)?;
    let mut counts = vec![0usize; num_bins];
    let mut conf_sums = vec![0f64; num_bins];
    let mut correct_counts = vec![0usize; num_bins];
    for p in preds {
        let b = bin_index(p.confidence, num_bins);
        counts[b] += 1;
        conf_sums[b] += p.confidence;
        correct_counts[b] += usize::from(p.correct);
    }
    let n = preds.len() as f64;
    let width = 1.0 / num_bins as f64;
    let mut total = 0.0;
    let mut bins = Vec::with_capacity(num_bins);
    for b in 0..num_bins {
        let lower = b as f64 * width;
        let upper = (b as f64 + 1.0) * width;
        let (mean_conf, acc) = if counts[b] > 0 {
            (
                conf_sums[b] / counts[b] as f64,
                correct_counts[b] as f64 / counts[b] as f64,
            )
        } else {
            ((lower + upper) / 2.0, 0.0)
        };
        if counts[b] > 0 {
            total += (counts[b] as f64 / n) * (mean_conf - acc).abs();
        }
        bins.push(ReliabilityBin {
            lower,
            upper,
            mean_conf,
            empirical_acc: acc,
            count: counts[b],
        });
    }
    Ok((total, bins))
}

/// Probability that a uniformly random correct prediction outranks a random
/// incorrect one, ties counted half — the Mann-Whitney statistic, computed
/// via average ranks.
pub fn auroc(preds: &[LabeledPrediction]) -> Result<f64, MetricsError> {
    validate(preds)?;
    let n_pos = preds.iter().filter(|p| p.correct).count();
    let n_neg = preds.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[a]
            .confidence
            .partial_cmp(&preds[b].confidence)
            .expect("validated confidences are not NaN")
    });
    // Average ranks across ties, then sum ranks of positives.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len()
            && preds[order[j + 1]].confidence == preds[order[i]].confidence
        {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if preds[idx].correct {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn accuracy(preds: &[LabeledPrediction]) -> Result<f64, MetricsError> {
    validate(preds)?;
    Ok(preds.iter().filter(|p| p.correct).count() as f64 / preds.len() as f64)
}

/// Accuracy over predictions retained by a confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveAccuracy {
    /// None when nothing clears the threshold.
    pub accuracy_retained: Option<f64>,
    /// Fraction of predictions retained.
    pub coverage: f64,
}

/// Accuracy over the subset with confidence strictly above `delta`, plus
/// the retained fraction.
pub fn selective_accuracy(
    preds: &[LabeledPrediction],
    delta: f64,
) -> Result<SelectiveAccuracy, MetricsError> {
    validate(preds)?;
    let retained: Vec<&LabeledPrediction> =
        preds.iter().filter(|p| p.confidence > delta).collect();
    let coverage = retained.len() as f64 / preds.len() as f64;
    if retained.is_empty() {
        return Ok(SelectiveAccuracy {
            accuracy_retained: None,
            coverage: 0.0,
        });
    }
    let acc = retained.iter().filter(|p| p.correct).count() as f64 / retained.len() as f64;
    Ok(SelectiveAccuracy {
        accuracy_retained: Some(acc),
        coverage,
    })
}

/// First-token probability baseline: `exp` of the first token's logprob.
pub fn first_prob(completion: &Completion) -> Result<f64, MetricsError> {
    let lps = completion
        .token_logprobs
        .as_ref()
        .ok_or(MetricsError::MissingLogprobs)?;
    let first = lps.first().ok_or(MetricsError::MissingLogprobs)?;
    Ok(first.exp())
}

/// Full report: ECE, AUROC (None on single-class input), accuracy and the
/// reliability bins.
pub fn report(preds: &[LabeledPrediction], num_bins: usize) -> Result<MetricReport, MetricsError> {
    let (ece, bins) = ece_with_bins(preds, num_bins)?;
    let auroc = match auroc(preds) {
        Ok(v) => Some(v),
        Err(MetricsError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        ece,
        auroc,
        accuracy: accuracy(preds)?,
        n: preds.len(),
        bins,
    })
}
