use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

/// Accuracy and F1 with label 1 as the positive class.
pub fn classification_metrics(predictions: &[f64], truth: &[f64]) -> Result<ClassificationMetrics> {
    if predictions.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".to_string()));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predictions.iter().zip(truth) {
        let (p, t) = (p == 1.0, t == 1.0);
        correct += usize::from(p == t);
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / truth.len() as f64,
        f1,
    })
}

pub fn regression_metrics(predictions: &[f64], truth: &[f64]) -> Result<RegressionMetrics> {
    if predictions.len() != truth.len() || truth.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "regression metrics need equal non-zero lengths, got {} and {}",
            predictions.len(),
            truth.len()
        )));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::InvalidArgument("R² is undefined for constant truth".to_string()));
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, t) in predictions.iter().zip(truth) {
        abs += (p - t).abs();
        sq += (p - t).powi(2);
    }
    Ok(RegressionMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        r2: 1.0 - sq / ss_tot,
    })
}
