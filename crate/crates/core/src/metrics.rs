//! Confusion counts, rates and the geometric mean of TPR and TNR.

use serde::{Deserialize, Serialize};

use crate::data::Class;
use crate::error::{Error, Result};

/// Counts with fall as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: Class, actual: Class) {
        match (predicted, actual) {
            (Class::Fall, Class::Fall) => self.tp += 1,
            (Class::Fall, Class::Normal) => self.fp += 1,
            (Class::Normal, Class::Normal) => self.tn += 1,
            (Class::Normal, Class::Fall) => self.fn_ += 1,
        }
    }
}

pub fn confusion(predictions: &[Class], labels: &[Class]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::input(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::input("nothing to evaluate"));
    }
    let mut c = ConfusionCounts::default();
    for (p, l) in predictions.iter().zip(labels) {
        c.add(*p, *l);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub tnr: f64,
    pub gmean: f64,
}

impl EvalMetrics {
    /// Builds metrics from rates; `gmean = sqrt(tpr * (1 - fpr))`.
    pub fn from_rates(tpr: f64, fpr: f64) -> Self {
        let tnr = 1.0 - fpr;
        Self {
            tpr,
            fpr,
            tnr,
            gmean: (tpr * tnr).sqrt(),
        }
    }

    /// Arithmetic mean of each field across folds (mean of gmeans, not
    /// gmean of mean rates).
    pub fn mean(folds: &[EvalMetrics]) -> Option<EvalMetrics> {
        if folds.is_empty() {
            return None;
        }
        let n = folds.len() as f64;
        let avg = |f: fn(&EvalMetrics) -> f64| folds.iter().map(f).sum::<f64>() / n;
        Some(EvalMetrics {
            tpr: avg(|m| m.tpr),
            fpr: avg(|m| m.fpr),
            tnr: avg(|m| m.tnr),
            gmean: avg(|m| m.gmean),
        })
    }
}

pub fn gmean(counts: &ConfusionCounts) -> Result<EvalMetrics> {
    let pos = counts.tp + counts.fn_;
    let neg = counts.tn + counts.fp;
    if pos == 0 {
        return Err(Error::UndefinedMetric("fall"));
    }
    if neg == 0 {
        return Err(Error::UndefinedMetric("normal"));
    }
    Ok(EvalMetrics::from_rates(
        counts.tp as f64 / pos as f64,
        counts.fp as f64 / neg as f64,
    ))
}

pub fn evaluate(predictions: &[Class], labels: &[Class]) -> Result<EvalMetrics> {
    gmean(&confusion(predictions, labels)?)
}
