//! Markov chains over click operations: maximum-likelihood fitting of order
//! m, information criteria, and k-step state prediction.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::ingest::ClickOp;

pub use crate::cluster::{cluster_transition_matrices, cluster_vwss_metrics};

const S: usize = ClickOp::COUNT;

/// Highest supported chain order (8^5 history states).
pub const MAX_ORDER: usize = 5;

/// How rows without observed transitions are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Observed rows are normalized counts; unseen rows are uniform.
    #[default]
    UniformUnseen,
    /// Add one to every cell before normalizing.
    AddOne,
}

/// Row-stochastic transition kernel of order `order`.
///
/// Rows are indexed by the base-8 code of the previous `order` tokens (oldest
/// token most significant); columns by [`ClickOp::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    order: usize,
    probs: Vec<f64>,
    counts: Vec<u64>,
}

impl TransitionMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / S
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * S..(state + 1) * S]
    }

    pub fn count_row(&self, state: usize) -> &[u64] {
        &self.counts[state * S..(state + 1) * S]
    }

    pub fn prob(&self, state: usize, next: ClickOp) -> f64 {
        self.probs[state * S + next.index()]
    }

    /// All probabilities row by row (64 values for order 1).
    pub fn flattened(&self) -> &[f64] {
        &self.probs
    }

    /// History code for the last `order` tokens.
    pub fn state_index(history: &[ClickOp]) -> usize {
        history.iter().fold(0, |acc, op| acc * S + op.index())
    }

    /// Order-1 kernel from explicit rows.
    pub fn from_rows(rows: [[f64; S]; S]) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.iter().any(|p| *p < 0.0 || !p.is_finite()) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return domain(format!("row {i} is not a probability distribution"));
            }
        }
        Ok(Self {
            order: 1,
            probs: rows.iter().flatten().copied().collect(),
            counts: vec![0; S * S],
        })
    }

    /// Σ over observed transitions of count × ln P.
    pub fn log_likelihood_of_counts(&self, counts: &[u64]) -> f64 {
        counts
            .iter()
            .zip(&self.probs)
            .filter(|(c, _)| **c > 0)
            .map(|(c, p)| *c as f64 * p.ln())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitReport {
    pub log_likelihood: f64,
    /// Free parameters, 8^m × 7.
    pub p: usize,
    /// Number of transitions observed.
    pub n: usize,
    pub aic: f64,
    pub bic: f64,
}

/// AIC = −2 ln L + 2p, BIC = −2 ln L + p ln n.
pub fn information_criteria(log_likelihood: f64, p: usize, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return domain("information criteria need n >= 1");
    }
    Ok(criteria_with_log_n(log_likelihood, p, (n as f64).ln()))
}

/// Same identities with ln n supplied directly.
pub fn criteria_with_log_n(log_likelihood: f64, p: usize, ln_n: f64) -> (f64, f64) {
    let base = -2.0 * log_likelihood;
    (base + 2.0 * p as f64, base + p as f64 * ln_n)
}

/// Counts every length-(m + 1) window of every sequence.
pub fn transition_counts<Q: AsRef<[ClickOp]>>(sequences: &[Q], order: usize) -> Vec<u64> {
    let mut counts = vec![0u64; S.pow(order as u32) * S];
    for seq in sequences {
        let seq = seq.as_ref();
        if seq.len() <= order {
            continue;
        }
        for w in seq.windows(order + 1) {
            let state = TransitionMatrix::state_index(&w[..order]);
            counts[state * S + w[order].index()] += 1;
        }
    }
    counts
}

/// Maximum-likelihood Markov chain of order `order` over all sequences.
pub fn fit_markov<Q: AsRef<[ClickOp]>>(
    sequences: &[Q],
    order: usize,
    smoothing: Smoothing,
) -> Result<(TransitionMatrix, FitReport)> {
    if order == 0 || order > MAX_ORDER {
        return domain(format!("Markov order must be in 1..={MAX_ORDER}, got {order}"));
    }
    let counts = transition_counts(sequences, order);
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return domain(format!("no sequence is longer than the order {order}"));
    }
    let mut probs = vec![0.0; counts.len()];
    for (row_c, row_p) in counts.chunks(S).zip(probs.chunks_mut(S)) {
        let total: u64 = row_c.iter().sum();
        match smoothing {
            Smoothing::UniformUnseen if total == 0 => row_p.fill(1.0 / S as f64),
            Smoothing::UniformUnseen => {
                for (p, c) in row_p.iter_mut().zip(row_c) {
                    *p = *c as f64 / total as f64;
                }
            }
            Smoothing::AddOne => {
                for (p, c) in row_p.iter_mut().zip(row_c) {
                    *p = (*c + 1) as f64 / (total + S as u64) as f64;
                }
            }
        }
    }
    let matrix = TransitionMatrix { order, probs, counts };
    let log_likelihood = matrix.log_likelihood_of_counts(&matrix.counts);
    let p = S.pow(order as u32) * (S - 1);
    let (aic, bic) = information_criteria(log_likelihood, p, n as usize)?;
    Ok((
        matrix,
        FitReport {
            log_likelihood,
            p,
            n: n as usize,
            aic,
            bic,
        },
    ))
}

/// x · P^k for an order-1 kernel.
pub fn predict_distribution(x: &[f64], matrix: &TransitionMatrix, k: usize) -> Result<Vec<f64>> {
    if matrix.order != 1 {
        return domain("state prediction is defined for order-1 chains");
    }
    if x.len() != S {
        return domain(format!("state distribution must have {S} entries"));
    }
    if x.iter().any(|p| *p < 0.0 || !p.is_finite()) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return domain("state distribution must be nonnegative and sum to 1");
    }
    let mut cur = x.to_vec();
    for _ in 0..k {
        let mut next = vec![0.0; S];
        for (i, xi) in cur.iter().enumerate() {
            for (j, nj) in next.iter_mut().enumerate() {
                *nj += xi * matrix.probs[i * S + j];
            }
        }
        cur = next;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClickOp::*;

    #[test]
    fn deterministic_alternation() {
        let (m, r) = fit_markov(&[vec![Pl, Pa, Pl, Pa, Pl]], 1, Smoothing::UniformUnseen).unwrap();
        assert_eq!(m.prob(Pl.index(), Pa), 1.0);
        assert_eq!(m.prob(Pa.index(), Pl), 1.0);
        assert_eq!(r.log_likelihood, 0.0);
        assert_eq!(r.n, 4);
        assert_eq!(r.p, 56);
        // unseen rows are uniform
        assert!(m.row(Sf.index()).iter().all(|p| *p == 0.125));
    }

    #[test]
    fn rows_are_stochastic() {
        let seqs = vec![vec![Pl, Sf, Sf, Pa, Pl, Sb, Rf, Rs, Pl], vec![Sb, Sb, SSb, Pa]];
        for smoothing in [Smoothing::UniformUnseen, Smoothing::AddOne] {
            for order in 1..=3 {
                let (m, _) = fit_markov(&seqs, order, smoothing).unwrap();
                for s in 0..m.n_states() {
                    assert!((m.row(s).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn short_sequences_are_rejected() {
        assert!(fit_markov(&[vec![Pl, Pa]], 2, Smoothing::UniformUnseen).is_err());
        assert!(fit_markov(&[vec![Pl, Pa]], 0, Smoothing::UniformUnseen).is_err());
    }

    #[test]
    fn criteria_identities() {
        assert_eq!(information_criteria(0.0, 0, 10).unwrap(), (0.0, 0.0));
        let (aic, bic) = information_criteria(-100.0, 5, 1).unwrap();
        assert_eq!(aic, 210.0);
        assert_eq!(bic, 200.0);
        assert_eq!(criteria_with_log_n(-100.0, 5, 2.0), (210.0, 210.0));
        let (aic, bic) = information_criteria(-100.0, 5, 7).unwrap();
        assert!((bic - aic - 5.0 * (7f64.ln() - 2.0)).abs() < 1e-9);
        assert!(information_criteria(-1.0, 1, 0).is_err());
    }

    #[test]
    fn prediction() {
        let mut rows = [[0.0; 8]; 8];
        for (i, r) in rows.iter_mut().enumerate() {
            r[(i + 1) % 8] = 1.0;
        }
        let m = TransitionMatrix::from_rows(rows).unwrap();
        let x = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(predict_distribution(&x, &m, 0).unwrap(), x.to_vec());
        assert_eq!(predict_distribution(&x, &m, 1).unwrap()[Pa.index()], 1.0);
        let u = TransitionMatrix::from_rows([[0.125; 8]; 8]).unwrap();
        let y = predict_distribution(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &u, 1).unwrap();
        assert!(y.iter().all(|p| (p - 0.125).abs() < 1e-15));
        assert!(predict_distribution(&[0.5; 8], &u, 1).is_err());
    }
}
