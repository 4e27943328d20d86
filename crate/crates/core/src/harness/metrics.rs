use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with malignant as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(predictions: &[usize], labels: &[usize]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p == 1, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Sensitivity and specificity are `None` when their class is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: f64,
}

pub fn compute_metrics(c: &ConfusionCounts) -> Result<DiagnosticMetrics> {
    if c.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Ok(DiagnosticMetrics {
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
    })
}
