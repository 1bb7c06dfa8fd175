//! Undirected student networks: co-membership and exact-match ties, multiplex
//! combination, densities, the E-I index, and QAP permutation tests.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exec;
use crate::linalg::{invert_spd, Matrix};
use crate::stats::pearson;

/// Symmetric binary relation without self-ties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
    labels: Vec<String>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return domain(format!("{} labels for {} nodes", labels.len(), self.n));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return domain(format!("edge ({i}, {j}) outside {n} nodes"));
            }
            a.set(i, j, true);
        }
        Ok(a)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn has(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// Sets both (i, j) and (j, i). Self-ties are ignored.
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        if i != j {
            self.bits[i * self.n + j] = on;
            self.bits[j * self.n + i] = on;
        }
    }

    /// Ties as (i, j) with i < j.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).filter(move |&j| self.has(i, j)).map(move |j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Upper-triangle cells as 0/1 values in row-major order.
    pub fn dyad_values(&self) -> Vec<f64> {
        upper_dyads(self.n, |i, j| f64::from(u8::from(self.has(i, j))))
    }

    /// Relabels nodes so that node `perm[i]` of `self` becomes node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.bits[i * self.n + j] = self.bits[perm[i] * self.n + perm[j]];
            }
        }
        out.labels = perm.iter().map(|p| self.labels[*p].clone()).collect();
        out
    }

    pub fn is_symmetric_loopless(&self) -> bool {
        (0..self.n).all(|i| !self.has(i, i) && (0..self.n).all(|j| self.has(i, j) == self.has(j, i)))
    }
}

fn upper_dyads(n: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(f(i, j));
        }
    }
    out
}

/// Tie between two nodes iff they share a category.
pub fn comembership_network<K: PartialEq>(assignment: &[K]) -> Adjacency {
    let n = assignment.len();
    let mut a = Adjacency::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if assignment[i] == assignment[j] {
                a.set(i, j, true);
            }
        }
    }
    a
}

/// Tie iff two nodes carry exactly the same attribute value.
pub fn exact_match_matrix<K: PartialEq>(attribute: &[K]) -> Adjacency {
    comembership_network(attribute)
}

fn same_nodes(a: &Adjacency, b: &Adjacency) -> Result<()> {
    if a.n != b.n {
        return domain(format!("node sets differ: {} vs {} nodes", a.n, b.n));
    }
    Ok(())
}

pub fn multiplex_and(a: &Adjacency, b: &Adjacency) -> Result<Adjacency> {
    same_nodes(a, b)?;
    let mut out = a.clone();
    for (o, x) in out.bits.iter_mut().zip(&b.bits) {
        *o = *o && *x;
    }
    Ok(out)
}

/// Ties over n(n−1)/2 possible dyads.
pub fn density(a: &Adjacency) -> Result<f64> {
    if a.n < 2 {
        return domain("density needs at least 2 nodes");
    }
    Ok(a.edge_count() as f64 / (a.n * (a.n - 1) / 2) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDensity {
    pub group: usize,
    pub nodes: usize,
    pub internal_ties: usize,
    /// None for groups of one node.
    pub density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDensities {
    pub groups: Vec<GroupDensity>,
    pub external_ties: usize,
}

fn check_partition(a: &Adjacency, partition: &[usize]) -> Result<()> {
    if partition.len() != a.n {
        return domain(format!("partition covers {} of {} nodes", partition.len(), a.n));
    }
    Ok(())
}

pub fn density_by_group(a: &Adjacency, partition: &[usize]) -> Result<GroupDensities> {
    check_partition(a, partition)?;
    let g = partition.iter().max().map_or(0, |m| m + 1);
    let mut nodes = vec![0usize; g];
    for p in partition {
        nodes[*p] += 1;
    }
    let mut internal = vec![0usize; g];
    let mut external = 0;
    for (i, j) in a.edges() {
        if partition[i] == partition[j] {
            internal[partition[i]] += 1;
        } else {
            external += 1;
        }
    }
    let groups = (0..g)
        .map(|k| GroupDensity {
            group: k,
            nodes: nodes[k],
            internal_ties: internal[k],
            density: (nodes[k] >= 2).then(|| internal[k] as f64 / (nodes[k] * (nodes[k] - 1) / 2) as f64),
        })
        .collect();
    Ok(GroupDensities {
        groups,
        external_ties: external,
    })
}

/// (E − I)/(E + I) over ties external and internal to the partition groups.
pub fn ei_index(a: &Adjacency, partition: &[usize]) -> Result<f64> {
    check_partition(a, partition)?;
    let (mut e, mut i) = (0i64, 0i64);
    for (u, v) in a.edges() {
        if partition[u] == partition[v] {
            i += 1;
        } else {
            e += 1;
        }
    }
    if e + i == 0 {
        return Err(Error::Undefined("E-I index of a graph without ties".into()));
    }
    Ok((e - i) as f64 / (e + i) as f64)
}

/// Tab-separated `label_i label_j` lines, one per tie.
pub fn write_edge_list<W: Write>(a: &Adjacency, mut out: W) -> Result<()> {
    for (i, j) in a.edges() {
        writeln!(out, "{}\t{}", a.labels[i], a.labels[j])?;
    }
    Ok(())
}

fn random_permutation(n: usize, seed: u64, replicate: usize) -> Vec<usize> {
    let mut rng = exec::stream_rng(seed, replicate as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Permutation `r` of the QAP test seeded by `seed`.
pub fn qap_permutation(n: usize, seed: u64, replicate: usize) -> Vec<usize> {
    random_permutation(n, seed, replicate)
}

/// Add-one Monte Carlo p-value. The 1e-12 slack keeps permutations that
/// reproduce the observed statistic from losing to rounding.
fn permutation_p(observed: f64, null: &[f64]) -> f64 {
    let extreme = null.iter().filter(|r| r.abs() >= observed.abs() - 1e-12).count();
    (extreme + 1) as f64 / (null.len() + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QapCorrelation {
    pub observed: f64,
    pub p: f64,
    pub n_perm: usize,
    pub seed: u64,
    /// Correlations under each joint row-column permutation of `b`.
    pub null: Vec<f64>,
}

pub fn qap_correlation(a: &Adjacency, b: &Adjacency, n_perm: usize, seed: u64) -> Result<QapCorrelation> {
    same_nodes(a, b)?;
    if n_perm == 0 {
        return domain("n_perm must be at least 1");
    }
    let x = a.dyad_values();
    let y = b.dyad_values();
    let observed = pearson(&x, &y)
        .ok_or_else(|| Error::Undefined("QAP correlation of a constant matrix".into()))?;
    let null = exec::map_range(n_perm, |r| {
        let perm = random_permutation(b.n, seed, r);
        let yp = upper_dyads(b.n, |i, j| f64::from(u8::from(b.has(perm[i], perm[j]))));
        pearson(&x, &yp).expect("permutation preserves variance")
    });
    Ok(QapCorrelation {
        observed,
        p: permutation_p(observed, &null),
        n_perm,
        seed,
        null,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QapRegression {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    /// One p-value per coefficient (intercept excluded).
    pub p_values: Vec<f64>,
    pub n_perm: usize,
    pub seed: u64,
}

fn ols_coefficients(inv: &Matrix, design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = inv.len();
    let mut xty = vec![0.0; k];
    for (row, yi) in design.iter().zip(y) {
        for (acc, x) in xty.iter_mut().zip(row) {
            *acc += x * yi;
        }
    }
    (0..k).map(|i| (0..k).map(|j| inv[i][j] * xty[j]).sum()).collect()
}

/// Linear probability model of `y` ties on predictor ties over all dyads,
/// with significance from refits under joint row-column permutations of `y`.
pub fn qap_regression(y: &Adjacency, xs: &[Adjacency], n_perm: usize, seed: u64) -> Result<QapRegression> {
    if xs.is_empty() {
        return domain("qap_regression needs at least one predictor");
    }
    if n_perm == 0 {
        return domain("n_perm must be at least 1");
    }
    for x in xs {
        same_nodes(y, x)?;
    }
    let cols: Vec<Vec<f64>> = xs.iter().map(Adjacency::dyad_values).collect();
    for (i, c) in cols.iter().enumerate() {
        if c.iter().all(|v| *v == c[0]) {
            return domain(format!("predictor {} is constant and collinear with the intercept", i + 1));
        }
    }
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            if let Some(r) = pearson(&cols[i], &cols[j]) {
                if r.abs() >= 1.0 - 1e-12 {
                    return domain(format!("predictors {} and {} are collinear", i + 1, j + 1));
                }
            }
        }
    }
    let m = cols[0].len();
    let design: Vec<Vec<f64>> = (0..m)
        .map(|d| std::iter::once(1.0).chain(cols.iter().map(|c| c[d])).collect())
        .collect();
    let k = xs.len() + 1;
    let mut xtx = vec![vec![0.0; k]; k];
    for row in &design {
        for a in 0..k {
            for b in 0..k {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert_spd(&xtx).ok_or_else(|| Error::Domain("predictors are jointly collinear".into()))?;
    let yv = y.dyad_values();
    let beta = ols_coefficients(&inv, &design, &yv);
    let ybar = crate::stats::mean(&yv);
    let sst: f64 = yv.iter().map(|v| (v - ybar).powi(2)).sum();
    let sse: f64 = design
        .iter()
        .zip(&yv)
        .map(|(row, v)| (v - row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>()).powi(2))
        .sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };
    let null = exec::map_range(n_perm, |r| {
        let perm = random_permutation(y.n, seed, r);
        let yp = upper_dyads(y.n, |i, j| f64::from(u8::from(y.has(perm[i], perm[j]))));
        ols_coefficients(&inv, &design, &yp)
    });
    let p_values = (1..k)
        .map(|c| {
            let col: Vec<f64> = null.iter().map(|b| b[c]).collect();
            permutation_p(beta[c], &col)
        })
        .collect();
    Ok(QapRegression {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        r_squared,
        p_values,
        n_perm,
        seed,
    })
}
