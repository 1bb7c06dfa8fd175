//! k-means (Lloyd iterations, k-means++ seeding, parallel restarts) and the
//! two clusterings built on it: over flattened transition matrices and over
//! per-sequence interaction metrics.

use rand::Rng;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::exec;
use crate::ingest::{ClickOp, Vwss};
use crate::linalg::squared_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 10,
            max_iter: 300,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// WCSS after each assignment step of the winning restart.
    pub history: Vec<f64>,
    pub converged: bool,
    /// Index of the winning restart.
    pub restart: usize,
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = squared_distance(p, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeanspp<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // rounding can leave target past the end; fall back to the last positive weight
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|d| *d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx].clone();
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let n = points.len();
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let mut changed = false;
        let mut wcss = 0.0;
        let mut dist = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            dist[i] = d;
            wcss += d;
        }
        history.push(wcss);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            sizes[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            } else {
                // empty cluster: move it onto the worst-served point
                let far = (0..n)
                    .max_by(|a, b| dist[*a].total_cmp(&dist[*b]).then(b.cmp(a)))
                    .unwrap_or(0);
                centroids[c] = points[far].clone();
                dist[far] = 0.0;
            }
        }
    }
    let wcss = points
        .iter()
        .zip(&assignments)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum();
    KMeansResult {
        assignments,
        centroids,
        wcss,
        history,
        converged,
        restart: 0,
    }
}

/// Best of `cfg.restarts` k-means++-seeded Lloyd runs by final WCSS.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.len();
    if cfg.k == 0 {
        return domain("k must be at least 1");
    }
    if cfg.k > n {
        return domain(format!("k = {} exceeds the number of points ({n})", cfg.k));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return domain("all points must have the same dimension");
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return domain("points must be finite");
    }
    let runs = exec::map_range(cfg.restarts.max(1), |r| {
        let mut rng = exec::stream_rng(cfg.seed, r as u64);
        let init = kmeanspp(points, cfg.k, &mut rng);
        let mut res = lloyd(points, init, cfg.max_iter.max(1));
        res.restart = r;
        res
    });
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.wcss < a.wcss { b } else { a })
        .expect("at least one restart");
    Ok(best)
}

pub fn cluster_transition_matrices(
    matrices: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    kmeans(
        matrices,
        &KMeansConfig {
            restarts,
            ..KMeansConfig::new(k, seed)
        },
    )
}

pub const METRIC_NAMES: [&str; 8] = [
    "prop_Pl",
    "prop_Pa",
    "prop_Sf",
    "prop_Sb",
    "prop_Rc",
    "time_pause",
    "time_seek_fw",
    "time_seek_bw",
];

/// Five click-class proportions and three dwell times. An empty sequence has
/// all-zero proportions.
pub fn vwss_metrics(v: &Vwss) -> [f64; 8] {
    let c = v.op_counts();
    let n = v.len() as f64;
    let prop = |x: usize| if n > 0.0 { x as f64 / n } else { 0.0 };
    use ClickOp::*;
    [
        prop(c[Pl.index()]),
        prop(c[Pa.index()]),
        prop(c[Sf.index()] + c[SSf.index()]),
        prop(c[Sb.index()] + c[SSb.index()]),
        prop(c[Rf.index()] + c[Rs.index()]),
        v.pause_time(),
        v.seek_forward_dwell(),
        v.seek_backward_dwell(),
    ]
}

/// Column z-scores; constant columns become 0.
pub fn standardize_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let dim = rows[0].len();
    let mut out = rows.to_vec();
    for j in 0..dim {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let mean = crate::stats::mean(&col);
        let sd = crate::stats::sample_sd(&col);
        for r in out.iter_mut() {
            r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct VwssClustering {
    /// Raw metric rows, one per sequence.
    pub metrics: Vec<[f64; 8]>,
    pub assignments: Vec<usize>,
    pub wcss: f64,
}

pub fn cluster_vwss_metrics(v: &[Vwss], k: usize, seed: u64, restarts: usize) -> Result<VwssClustering> {
    let metrics: Vec<[f64; 8]> = exec::map(v, vwss_metrics);
    let rows: Vec<Vec<f64>> = metrics.iter().map(|m| m.to_vec()).collect();
    let z = standardize_columns(&rows);
    let res = cluster_transition_matrices(&z, k, seed, restarts)?;
    Ok(VwssClustering {
        metrics,
        assignments: res.assignments,
        wcss: res.wcss,
    })
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Hubert–Arabie adjusted Rand index. Two trivial partitions that agree give 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return domain("label vectors differ in length");
    }
    let n = a.len() as u64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (x, y) in a.iter().zip(b) {
        table[*x][*y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|c| choose2(*c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let mut rng = exec::stream_rng(1, 0);
        for (c, center) in [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]].iter().enumerate() {
            for _ in 0..30 {
                pts.push(vec![center[0] + rng.random::<f64>(), center[1] + rng.random::<f64>()]);
                labels.push(c);
            }
        }
        (pts, labels)
    }

    #[test]
    fn recovers_blobs() {
        let (pts, labels) = blobs();
        let r = kmeans(&pts, &KMeansConfig::new(3, 9)).unwrap();
        assert_eq!(adjusted_rand_index(&r.assignments, &labels).unwrap(), 1.0);
        assert!(r.converged);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn k_equals_n_and_duplicates() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0]];
        assert_eq!(kmeans(&pts, &KMeansConfig::new(3, 0)).unwrap().wcss, 0.0);
        let dup = vec![vec![2.0, 3.0]; 5];
        let r = kmeans(&dup, &KMeansConfig::new(1, 0)).unwrap();
        assert_eq!(r.centroids[0], vec![2.0, 3.0]);
        assert_eq!(r.wcss, 0.0);
        assert!(kmeans(&pts, &KMeansConfig::new(4, 0)).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let (pts, _) = blobs();
        let a = kmeans(&pts, &KMeansConfig::new(4, 3)).unwrap();
        let b = kmeans(&pts, &KMeansConfig::new(4, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // two coincident centroids: one of them gets no points on the first pass
        let pts = vec![vec![0.0], vec![0.1], vec![10.0]];
        let r = lloyd(&pts, vec![vec![0.0], vec![0.0]], 50);
        assert!((r.wcss - 0.005).abs() < 1e-12);
        assert!(r.assignments[2] != r.assignments[0]);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285715
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap();
        assert!((v - 4.0 / 7.0).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn proportions_close() {
        let v = Vwss {
            tokens: vec![ClickOp::Pl, ClickOp::SSf, ClickOp::Rf, ClickOp::Pa],
            token_times: vec![0.0, 1.0, 2.0, 3.0],
            token_rates: vec![1.0; 4],
            ..Default::default()
        };
        let m = vwss_metrics(&v);
        assert!((m[..5].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(m[2], 0.25);
    }
}
