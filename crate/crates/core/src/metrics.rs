//! Confusion counts and the derived detection metrics.
//!
//! Label 1 (current) is the positive class: a true positive is a current
//! fact predicted current, a true negative an outdated fact predicted
//! outdated.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Derives the metrics from counts. Precision or recall with a zero
    /// denominator is 0, and so is F1 when both are 0.
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Result<Self> {
        let total = tp + tn + fp + fn_;
        if total == 0 {
            return Err(Error::Empty("no facts to evaluate".into()));
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Ok(Self {
            tp,
            tn,
            fp,
            fn_,
            accuracy: ratio(tp + tn, total),
            precision,
            recall,
            f1,
        })
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  (tp {} tn {} fp {} fn {})",
            self.accuracy, self.precision, self.recall, self.f1, self.tp, self.tn, self.fp, self.fn_
        )
    }
}

/// Thresholds probabilities (`p >= threshold` predicts 1) and counts.
pub fn evaluate_probabilities(probs: &[f64], labels: &[f64], threshold: f64) -> Result<EvalReport> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y == 1.0) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    EvalReport::from_counts(tp, tn, fp, fn_)
}

/// Accuracy of predicting 1 for every fact.
pub fn majority_accuracy(labels: &[f64]) -> f64 {
    ratio(labels.iter().filter(|&&y| y == 1.0).count(), labels.len())
}

pub const METRICS_HEADER: &str = "dataset,param,value,metric,score,seed,wall_seconds";

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

/// One line of a metrics CSV. A failed run has no report and writes `NaN`
/// metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub param: String,
    pub value: String,
    pub report: Option<EvalReport>,
    pub seed: u64,
    pub wall_seconds: f64,
}

impl MetricsRow {
    /// One line per metric, newline-terminated. A failed run scores NaN.
    pub fn to_csv(&self) -> String {
        let scores = match &self.report {
            Some(r) => [r.accuracy, r.precision, r.recall, r.f1],
            None => [f64::NAN; 4],
        };
        let mut out = String::new();
        for (metric, score) in METRIC_NAMES.iter().zip(scores) {
            let score = if score.is_nan() { "NaN".to_owned() } else { format!("{score:.6}") };
            out += &format!(
                "{},{},{},{metric},{score},{},{:.3}\n",
                self.dataset, self.param, self.value, self.seed, self.wall_seconds
            );
        }
        out
    }
}

pub const SPLIT_METRICS_HEADER: &str = "dataset,split,accuracy,precision,recall,f1,tp,tn,fp,fn,majority_accuracy,seed";

/// Metrics of one evaluated split. Carries no timing, so reruns under the
/// same seed produce identical lines.
pub fn split_metrics_row(dataset: &str, split: &str, r: &EvalReport, majority: f64, seed: u64) -> String {
    format!(
        "{dataset},{split},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{majority:.6},{seed}",
        r.accuracy, r.precision, r.recall, r.f1, r.tp, r.tn, r.fp, r.fn_
    )
}
