//! Cost-sensitive L2 logistic regression, binary and multinomial, trained by
//! full-batch gradient descent with Barzilai-Borwein steps and Armijo
//! backtracking.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::learn::features::FeatureVector;
use crate::linalg::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScheme {
    Unit,
    /// Class k weighs N / (K · n_k), so every class carries equal total cost.
    #[default]
    InverseFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub lambda: f64,
    pub costs: CostScheme,
    /// Features present in fewer training rows than this are dropped.
    pub rare_threshold: usize,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            costs: CostScheme::InverseFrequency,
            rare_threshold: 2,
            tolerance: 1e-6,
            max_iter: 20_000,
        }
    }
}

/// Feature names kept after rare-feature filtering, with the max-abs scale
/// each column is divided by.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    pub names: Vec<String>,
    pub scales: Vec<f64>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn fit(rows: &[FeatureVector], rare_threshold: usize) -> Self {
        let mut seen: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for r in rows {
            for (name, v) in &r.features {
                if *v != 0.0 {
                    let e = seen.entry(name).or_insert((0, 0.0));
                    e.0 += 1;
                    e.1 = e.1.max(v.abs());
                }
            }
        }
        let kept: Vec<(&str, f64)> = seen
            .into_iter()
            .filter(|(_, (count, _))| *count >= rare_threshold)
            .map(|(n, (_, scale))| (n, scale))
            .collect();
        Self {
            names: kept.iter().map(|(n, _)| n.to_string()).collect(),
            scales: kept.iter().map(|(_, s)| *s).collect(),
            index: kept.iter().enumerate().map(|(i, (n, _))| (n.to_string(), i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Sparse scaled row; unknown features are ignored.
    pub fn encode(&self, fv: &FeatureVector) -> Vec<(usize, f64)> {
        fv.features
            .iter()
            .filter_map(|(n, v)| self.index.get(n).map(|i| (*i, v / self.scales[*i])))
            .filter(|(_, v)| *v != 0.0)
            .collect()
    }
}

/// Training rows encoded against a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn from_features(rows: &[FeatureVector], rare_threshold: usize) -> Self {
        let vocabulary = Vocabulary::fit(rows, rare_threshold);
        Self {
            rows: rows.iter().map(|r| vocabulary.encode(r)).collect(),
            labels: rows.iter().map(|r| r.label).collect(),
            vocabulary,
        }
    }
}

/// The penalized objective. Parameters are laid out as one block
/// `[intercept, w_1..w_d]` for a binary model, or one block per class for a
/// multinomial model.
#[derive(Debug, Clone)]
pub struct Problem {
    x: Vec<Vec<(usize, f64)>>,
    /// Class index 0..k per row.
    y: Vec<usize>,
    /// Per-row cost divided by the row count.
    sample_weight: Vec<f64>,
    d: usize,
    k: usize,
    lambda: f64,
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Problem {
    pub fn new(
        x: Vec<Vec<(usize, f64)>>,
        y: Vec<usize>,
        costs: &[f64],
        d: usize,
        k: usize,
        lambda: f64,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return domain("rows and labels differ in length");
        }
        if k < 2 {
            return domain("training needs at least two classes");
        }
        if !(lambda >= 0.0) {
            return domain("lambda must be nonnegative");
        }
        if y.iter().any(|c| *c >= k) || costs.len() != k {
            return domain("class index out of range");
        }
        let n = x.len() as f64;
        Ok(Self {
            sample_weight: y.iter().map(|c| costs[*c] / n).collect(),
            x,
            y,
            d,
            k,
            lambda,
        })
    }

    fn blocks(&self) -> usize {
        if self.k == 2 {
            1
        } else {
            self.k
        }
    }

    pub fn n_params(&self) -> usize {
        self.blocks() * (self.d + 1)
    }

    fn score(&self, theta: &[f64], block: usize, row: &[(usize, f64)]) -> f64 {
        let off = block * (self.d + 1);
        theta[off] + row.iter().map(|(j, v)| theta[off + 1 + j] * v).sum::<f64>()
    }

    /// Objective value and gradient at `theta`.
    pub fn value_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; theta.len()];
        let mut value = 0.0;
        let b = self.blocks();
        let mut z = vec![0.0; b];
        for ((row, y), w) in self.x.iter().zip(&self.y).zip(&self.sample_weight) {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc = self.score(theta, c, row);
            }
            if b == 1 {
                let yv = *y as f64;
                value += w * (log1pexp(z[0]) - yv * z[0]);
                let r = w * (sigmoid(z[0]) - yv);
                grad[0] += r;
                for (j, v) in row {
                    grad[1 + j] += r * v;
                }
            } else {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|zc| (zc - m).exp()).sum::<f64>().ln();
                value += w * (lse - z[*y]);
                for c in 0..b {
                    let r = w * ((z[c] - lse).exp() - f64::from(u8::from(c == *y)));
                    let off = c * (self.d + 1);
                    grad[off] += r;
                    for (j, v) in row {
                        grad[off + 1 + j] += r * v;
                    }
                }
            }
        }
        for c in 0..b {
            let off = c * (self.d + 1);
            for j in 0..self.d {
                let t = theta[off + 1 + j];
                value += 0.5 * self.lambda * t * t;
                grad[off + 1 + j] += self.lambda * t;
            }
        }
        (value, grad)
    }

    /// Class probabilities for one row.
    pub fn probabilities(&self, theta: &[f64], row: &[(usize, f64)]) -> Vec<f64> {
        if self.blocks() == 1 {
            let p = sigmoid(self.score(theta, 0, row));
            vec![1.0 - p, p]
        } else {
            softmax((0..self.k).map(|c| self.score(theta, c, row)).collect())
        }
    }
}

fn softmax(z: Vec<f64>) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting at the initial point.
    pub loss_history: Vec<f64>,
}

/// Gradient descent from zero until the gradient norm drops below `tol`.
pub fn minimize(problem: &Problem, tol: f64, max_iter: usize) -> Optimum {
    let mut theta = vec![0.0; problem.n_params()];
    let (mut f, mut g) = problem.value_grad(&theta);
    let mut history = vec![f];
    let mut step = 1.0 / norm(&g).max(1.0);
    let mut iterations = 0;
    while iterations < max_iter && norm(&g) >= tol {
        let gg = dot(&g, &g);
        let mut accepted = None;
        let mut alpha = step;
        while alpha > 1e-20 {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - alpha * gi).collect();
            let (fc, gc) = problem.value_grad(&cand);
            if fc <= f - 1e-4 * alpha * gg && fc < f {
                accepted = Some((cand, fc, gc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { alpha * 2.0 };
        theta = cand;
        f = fc;
        g = gc;
        history.push(f);
        iterations += 1;
    }
    let grad_norm = norm(&g);
    Optimum {
        theta,
        iterations,
        grad_norm,
        converged: grad_norm < tol,
        loss_history: history,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub vocabulary: Vocabulary,
    /// Original labels in the order of the probability vector.
    pub classes: Vec<usize>,
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub loss_history: Vec<f64>,
}

/// Per-class costs for labels already mapped to 0..k.
pub fn class_costs(y: &[usize], k: usize, scheme: CostScheme) -> Vec<f64> {
    match scheme {
        CostScheme::Unit => vec![1.0; k],
        CostScheme::InverseFrequency => {
            let mut n = vec![0usize; k];
            for c in y {
                n[*c] += 1;
            }
            n.iter()
                .map(|nk| {
                    if *nk == 0 {
                        0.0
                    } else {
                        y.len() as f64 / (k as f64 * *nk as f64)
                    }
                })
                .collect()
        }
    }
}

pub fn train_logistic(rows: &[FeatureVector], cfg: &LogisticConfig) -> Result<LogisticModel> {
    let mut classes: Vec<usize> = rows.iter().map(|r| r.label).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return domain("training set has a single class");
    }
    let data = Dataset::from_features(rows, cfg.rare_threshold);
    let y: Vec<usize> = data
        .labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label collected above"))
        .collect();
    let k = classes.len();
    let costs = class_costs(&y, k, cfg.costs);
    let problem = Problem::new(data.rows, y, &costs, data.vocabulary.len(), k, cfg.lambda)?;
    let opt = minimize(&problem, cfg.tolerance, cfg.max_iter);
    Ok(LogisticModel {
        vocabulary: data.vocabulary,
        classes,
        theta: opt.theta,
        iterations: opt.iterations,
        grad_norm: opt.grad_norm,
        converged: opt.converged,
        loss_history: opt.loss_history,
    })
}

impl LogisticModel {
    fn d(&self) -> usize {
        self.vocabulary.len()
    }

    fn blocks(&self) -> usize {
        if self.classes.len() == 2 {
            1
        } else {
            self.classes.len()
        }
    }

    fn score(&self, block: usize, row: &[(usize, f64)]) -> f64 {
        let off = block * (self.d() + 1);
        self.theta[off] + row.iter().map(|(j, v)| self.theta[off + 1 + j] * v).sum::<f64>()
    }

    /// Probabilities in the order of [`LogisticModel::classes`].
    pub fn predict_proba(&self, fv: &FeatureVector) -> Vec<f64> {
        let row = self.vocabulary.encode(fv);
        if self.blocks() == 1 {
            let p = sigmoid(self.score(0, &row));
            vec![1.0 - p, p]
        } else {
            softmax((0..self.blocks()).map(|c| self.score(c, &row)).collect())
        }
    }

    /// Most probable label; ties go to the smaller label.
    pub fn predict(&self, fv: &FeatureVector) -> usize {
        let p = self.predict_proba(fv);
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    /// (feature, weight per raw unit) for one parameter block. For a binary
    /// model the only block scores the larger label.
    pub fn weights(&self, block: usize) -> Vec<(String, f64)> {
        let off = block * (self.d() + 1);
        let mut out = vec![("(intercept)".to_string(), self.theta[off])];
        for (j, name) in self.vocabulary.names.iter().enumerate() {
            out.push((name.clone(), self.theta[off + 1 + j] / self.vocabulary.scales[j]));
        }
        out
    }

    /// `n` features with the largest |weight| in a block, strongest first.
    pub fn top_features(&self, block: usize, n: usize) -> Vec<(String, f64)> {
        let mut w: Vec<(String, f64)> = self.weights(block).into_iter().skip(1).collect();
        w.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
        w.truncate(n);
        w
    }

    /// Plain-text dump: `class<TAB>feature<TAB>weight`.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for b in 0..self.blocks() {
            let class = if self.blocks() == 1 { self.classes[1] } else { self.classes[b] };
            for (name, w) in self.weights(b) {
                writeln!(out, "{class}\t{name}\t{w}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::stream_rng;
    use rand::Rng;

    fn row(label: usize, feats: &[(&str, f64)]) -> FeatureVector {
        FeatureVector {
            features: feats.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
            label,
            group_id: String::new(),
        }
    }

    #[test]
    fn separable_pair() {
        let rows = vec![row(1, &[("x", 1.0)]), row(0, &[("x", -1.0)])];
        let cfg = LogisticConfig {
            rare_threshold: 1,
            ..Default::default()
        };
        let m = train_logistic(&rows, &cfg).unwrap();
        assert!(m.converged);
        assert_eq!(m.predict(&rows[0]), 1);
        assert_eq!(m.predict(&rows[1]), 0);
        assert!(m.loss_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn heavy_penalty_gives_prior() {
        let rows: Vec<_> = (0..10)
            .map(|i| row(usize::from(i < 3), &[("x", i as f64), ("y", 1.0)]))
            .collect();
        let cfg = LogisticConfig {
            lambda: 1e8,
            costs: CostScheme::Unit,
            rare_threshold: 1,
            ..Default::default()
        };
        let m = train_logistic(&rows, &cfg).unwrap();
        let p = m.predict_proba(&rows[0]);
        assert!((p[1] - 0.3).abs() < 1e-4);
        let weighted = train_logistic(&rows, &LogisticConfig { costs: CostScheme::InverseFrequency, ..cfg }).unwrap();
        assert!((weighted.predict_proba(&rows[0])[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn single_class_rejected() {
        assert!(train_logistic(&[row(1, &[]), row(1, &[])], &LogisticConfig::default()).is_err());
    }

    #[test]
    fn rare_features_dropped() {
        let rows = vec![row(0, &[("a", 1.0), ("b", 1.0)]), row(1, &[("a", 2.0)])];
        let v = Vocabulary::fit(&rows, 2);
        assert_eq!(v.names, vec!["a".to_string()]);
        assert_eq!(v.scales, vec![2.0]);
    }

    fn finite_difference_check(k: usize) {
        let mut rng = stream_rng(42, k as u64);
        let d = 4;
        let x: Vec<Vec<(usize, f64)>> = (0..30)
            .map(|_| (0..d).map(|j| (j, rng.random::<f64>() * 2.0 - 1.0)).collect())
            .collect();
        let y: Vec<usize> = (0..30).map(|i| i % k).collect();
        let costs: Vec<f64> = (0..k).map(|c| 1.0 + c as f64 * 0.5).collect();
        let p = Problem::new(x, y, &costs, d, k, 0.3).unwrap();
        for _ in 0..5 {
            let theta: Vec<f64> = (0..p.n_params()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let (_, g) = p.value_grad(&theta);
            for i in 0..theta.len() {
                let h = 1e-5;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (p.value_grad(&tp).0 - p.value_grad(&tm).0) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1e-8);
                assert!(rel < 1e-5 || (fd - g[i]).abs() < 1e-9, "param {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        finite_difference_check(2);
        finite_difference_check(3);
    }

    #[test]
    fn unit_and_balanced_costs_agree() {
        let rows: Vec<_> = (0..8)
            .map(|i| row(i % 2, &[("x", i as f64), ("z", (i * i) as f64)]))
            .collect();
        let base = LogisticConfig {
            rare_threshold: 1,
            ..Default::default()
        };
        let a = train_logistic(&rows, &LogisticConfig { costs: CostScheme::Unit, ..base }).unwrap();
        let b = train_logistic(&rows, &LogisticConfig { costs: CostScheme::InverseFrequency, ..base }).unwrap();
        assert_eq!(a.theta, b.theta);
    }
}
