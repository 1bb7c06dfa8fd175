//! Binary agreement metrics over a 2×2 confusion table.

use serde::Serialize;

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfusionSummary {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    pub accuracy: f64,
    /// Chance agreement from the predicted and true class shares.
    pub p_e: f64,
    pub kappa: f64,
    /// FP / (FP + TN), the cell arithmetic of the worked example this crate
    /// reproduces. It is what is more usually called the false positive rate.
    pub fnr: f64,
    /// FN / (FN + TP).
    pub fnr_conventional: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionSummary {
    pub fn from_counts(tp: u64, fn_: u64, fp: u64, tn: u64) -> Result<Self> {
        let n = tp + fn_ + fp + tn;
        if n == 0 {
            return domain("empty confusion table");
        }
        let nf = n as f64;
        let accuracy = (tp + tn) as f64 / nf;
        let pred_pos = (tp + fp) as f64 / nf;
        let true_pos = (tp + fn_) as f64 / nf;
        let p_e = pred_pos * true_pos + (1.0 - pred_pos) * (1.0 - true_pos);
        // p_e = 1 forces a single class on both sides, which is perfect agreement
        let kappa = if accuracy == 1.0 {
            1.0
        } else {
            (accuracy - p_e) / (1.0 - p_e)
        };
        Ok(Self {
            tp,
            fn_,
            fp,
            tn,
            accuracy,
            p_e,
            kappa,
            fnr: ratio(fp, fp + tn),
            fnr_conventional: ratio(fn_, fn_ + tp),
        })
    }
}

/// Collapses labels to `positive` versus the rest and tabulates.
pub fn evaluate_metrics(predictions: &[usize], labels: &[usize], positive: usize) -> Result<ConfusionSummary> {
    if predictions.len() != labels.len() {
        return domain("predictions and labels differ in length");
    }
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for (p, l) in predictions.iter().zip(labels) {
        match (*p == positive, *l == positive) {
            (true, true) => tp += 1,
            (false, true) => fn_ += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    ConfusionSummary::from_counts(tp, fn_, fp, tn)
}

/// Accuracy and Cohen's kappa over any number of classes.
pub fn multiclass_agreement(predictions: &[usize], labels: &[usize]) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() {
        return domain("predictions and labels differ in length");
    }
    if labels.is_empty() {
        return domain("no predictions to score");
    }
    let k = predictions.iter().chain(labels).max().map_or(0, |m| m + 1);
    let n = labels.len() as f64;
    let mut pred = vec![0.0; k];
    let mut truth = vec![0.0; k];
    let mut agree = 0.0;
    for (p, l) in predictions.iter().zip(labels) {
        pred[*p] += 1.0;
        truth[*l] += 1.0;
        if p == l {
            agree += 1.0;
        }
    }
    let acc = agree / n;
    let p_e: f64 = pred.iter().zip(&truth).map(|(a, b)| a / n * b / n).sum();
    let kappa = if acc == 1.0 { 1.0 } else { (acc - p_e) / (1.0 - p_e) };
    Ok((acc, kappa))
}
