//! Binary classification metrics.
//!
//! The positive class is [`Label::Unfair`]. Macro F1 averages the per-class F1
//! of both labels; a class whose F1 has a zero denominator scores 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {predictions} predictions vs {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("cannot compute metrics on an empty sample")]
    Empty,
}

/// 2x2 confusion counts with unfair as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Indexed by label: `[fair, unfair]`.
    pub per_class: [ClassMetrics; 2],
    pub confusion: Confusion,
    pub n: u64,
    pub parse_failures: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(tp: u64, fp: u64, fn_: u64) -> ClassMetrics {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    // 2PR/(P+R) == 2TP/(2TP+FP+FN); the count form avoids rounding.
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    ClassMetrics {
        precision,
        recall,
        f1,
        support: tp + fn_,
    }
}

impl MetricReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let Confusion { tp, tn, fp, fn_ } = confusion;
        let fair = class_metrics(tn, fn_, fp);
        let unfair = class_metrics(tp, fp, fn_);
        MetricReport {
            accuracy: ratio(tp + tn, confusion.total()),
            macro_f1: (fair.f1 + unfair.f1) / 2.0,
            per_class: [fair, unfair],
            confusion,
            n: confusion.total(),
            parse_failures: 0,
        }
    }

    pub fn with_parse_failures(mut self, n: u64) -> Self {
        self.parse_failures = n;
        self
    }
}

pub fn confusion(predictions: &[Label], golds: &[Label]) -> Result<Confusion, MetricsError> {
    if predictions.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = Confusion::default();
    for (p, g) in predictions.iter().zip(golds) {
        match (p, g) {
            (Label::Unfair, Label::Unfair) => c.tp += 1,
            (Label::Fair, Label::Fair) => c.tn += 1,
            (Label::Unfair, Label::Fair) => c.fp += 1,
            (Label::Fair, Label::Unfair) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn compute_metrics(predictions: &[Label], golds: &[Label]) -> Result<MetricReport, MetricsError> {
    confusion(predictions, golds).map(MetricReport::from_confusion)
}
