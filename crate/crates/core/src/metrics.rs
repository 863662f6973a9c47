//! Binary classification metrics. The positive class is "the equation is
//! correct".

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Only set by callers that also have scores.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("{predicted} predictions for {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no samples")]
    Empty,
    #[error("both classes are needed, got only {0}")]
    SingleClass(bool),
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch { predicted: a, truth: b });
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn confusion(predicted: &[bool], truth: &[bool]) -> Result<Confusion, MetricsError> {
    check_lengths(predicted.len(), truth.len())?;
    let mut c = Confusion::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Precision and recall are 0 when undefined, and so is F1 when both are 0.
pub fn compute_metrics(predicted: &[bool], truth: &[bool]) -> Result<Metrics, MetricsError> {
    Ok(metrics_from(confusion(predicted, truth)?))
}

pub fn metrics_from(c: Confusion) -> Metrics {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
        auc: None,
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic: the chance a
/// positive outscores a negative, ties counting half.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64, MetricsError> {
    check_lengths(scores.len(), truth.len())?;
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(truth.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = pairs.iter().filter(|p| p.1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass(positives > 0));
    }
    // twice the number of winning pairs, kept as an integer
    let mut doubled: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            if pairs[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Ok(doubled as f64 / (2 * positives as u128 * negatives as u128) as f64)
}
