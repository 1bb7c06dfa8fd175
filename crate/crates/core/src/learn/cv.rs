//! Cross-validation folds that keep every student's rows together.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{domain, Result};
use crate::exec::{self, stream_rng};
use crate::learn::features::FeatureVector;
use crate::learn::logistic::{train_logistic, LogisticConfig};

/// Fold index per row. Distinct groups are shuffled under `seed` and dealt
/// round-robin, so fold sizes in groups differ by at most one.
pub fn grouped_kfold<S: AsRef<str>>(group_ids: &[S], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut groups: Vec<&str> = group_ids.iter().map(AsRef::as_ref).collect();
    groups.sort_unstable();
    groups.dedup();
    if k < 2 {
        return domain("cross-validation needs k >= 2");
    }
    if k > groups.len() {
        return domain(format!("k = {k} exceeds the {} distinct groups", groups.len()));
    }
    groups.shuffle(&mut stream_rng(seed, 0));
    let fold_of: BTreeMap<&str, usize> = groups.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();
    Ok(group_ids.iter().map(|g| fold_of[g.as_ref()]).collect())
}

/// Number of distinct groups per fold.
pub fn fold_sizes<S: AsRef<str>>(group_ids: &[S], folds: &[usize], k: usize) -> Vec<usize> {
    let mut seen: Vec<std::collections::BTreeSet<&str>> = vec![Default::default(); k];
    for (g, f) in group_ids.iter().zip(folds) {
        seen[*f].insert(g.as_ref());
    }
    seen.iter().map(|s| s.len()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<usize>,
    /// Out-of-fold prediction per row.
    pub predictions: Vec<usize>,
    pub fold_accuracy: Vec<f64>,
    /// Every fold's optimizer reached the gradient tolerance.
    pub converged: bool,
}

/// Grouped k-fold cross-validation of the logistic model on `group_id`.
/// Folds train in parallel.
pub fn cross_validate(rows: &[FeatureVector], k: usize, seed: u64, cfg: &LogisticConfig) -> Result<CvReport> {
    let ids: Vec<&str> = rows.iter().map(|r| r.group_id.as_str()).collect();
    let folds = grouped_kfold(&ids, k, seed)?;
    let fits = exec::map_range(k, |f| -> Result<(Vec<(usize, usize)>, bool)> {
        let train: Vec<FeatureVector> = rows
            .iter()
            .zip(&folds)
            .filter(|(_, g)| **g != f)
            .map(|(r, _)| r.clone())
            .collect();
        let model = train_logistic(&train, cfg)?;
        let preds = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| folds[*i] == f)
            .map(|(i, r)| (i, model.predict(r)))
            .collect();
        Ok((preds, model.converged))
    });
    let mut predictions = vec![0; rows.len()];
    let mut fold_accuracy = Vec::with_capacity(k);
    let mut converged = true;
    for fit in fits {
        let (preds, ok) = fit?;
        converged &= ok;
        let hits = preds.iter().filter(|(i, p)| rows[*i].label == *p).count();
        fold_accuracy.push(hits as f64 / preds.len().max(1) as f64);
        for (i, p) in preds {
            predictions[i] = p;
        }
    }
    Ok(CvReport {
        folds,
        predictions,
        fold_accuracy,
        converged,
    })
}
