//! Hypothesis tests and discretizers: two-sample z, one-way ANOVA, Tukey
//! HSD, χ² with continuity-corrected residuals, equal-width and
//! equal-frequency binning.

mod tukey_table;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};

/// Linear-interpolation quantile of an ascending slice (`p` in [0, 1]).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Upper tail of the standard normal, P(Z > z).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTest {
    pub z_abs: f64,
    pub p_two_sided: f64,
}

/// Two-sample z test with a known population standard deviation.
pub fn two_sample_z(mean1: f64, mean2: f64, sigma: f64, n1: usize, n2: usize) -> Result<ZTest> {
    if !(sigma > 0.0) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    if n1 == 0 || n2 == 0 {
        return domain("sample sizes must be at least 1");
    }
    let z_abs = (mean1 - mean2).abs() / (sigma * (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt());
    Ok(ZTest {
        z_abs,
        p_two_sided: (2.0 * normal_sf(z_abs)).min(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anova {
    /// `None` when both mean squares are zero (0/0).
    pub f: Option<f64>,
    pub df_between: usize,
    pub df_within: usize,
    pub ms_between: f64,
    pub ms_within: f64,
    pub p: Option<f64>,
    pub group_means: Vec<f64>,
    pub group_sizes: Vec<usize>,
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return domain("ANOVA needs at least two groups");
    }
    if groups.iter().any(|g| g.is_empty()) {
        return domain("every ANOVA group needs at least one observation");
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let k = groups.len();
    if n <= k {
        return domain("ANOVA needs at least one within-group degree of freedom");
    }
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let (df_b, df_w) = (k - 1, n - k);
    let ms_between = ss_between / df_b as f64;
    let ms_within = ss_within / df_w as f64;
    let f = if ms_within > 0.0 {
        Some(ms_between / ms_within)
    } else if ms_between > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    };
    let p = f.map(|f| {
        if f.is_infinite() {
            0.0
        } else {
            let dist = FisherSnedecor::new(df_b as f64, df_w as f64).expect("positive df");
            dist.sf(f)
        }
    });
    Ok(Anova {
        f,
        df_between: df_b,
        df_within: df_w,
        ms_between,
        ms_within,
        p,
        group_means: means,
        group_sizes: groups.iter().map(|g| g.len()).collect(),
    })
}

/// Studentized range quantile from the embedded table.
///
/// `alpha` must be 0.05 or 0.01 and `groups` in 2..=10. Degrees of freedom
/// between grid points round down to the next tabulated value, which gives a
/// larger (conservative) quantile.
pub fn studentized_range_q(alpha: f64, groups: usize, df: usize) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &tukey_table::Q_05
    } else if (alpha - 0.01).abs() < 1e-12 {
        &tukey_table::Q_01
    } else {
        return domain(format!("no studentized range table for alpha = {alpha}"));
    };
    if !(2..=10).contains(&groups) {
        return domain(format!("studentized range table covers 2..=10 groups, got {groups}"));
    }
    if df == 0 {
        return domain("studentized range needs df >= 1");
    }
    let row = tukey_table::DF_GRID
        .iter()
        .rposition(|d| *d <= df as f64)
        .expect("df >= 1 is always on the grid");
    Ok(table[row][groups - 2])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TukeyPair {
    pub i: usize,
    pub j: usize,
    pub mean_diff: f64,
    pub critical: f64,
    pub significant: bool,
}

/// Tukey HSD pairwise comparisons (Tukey–Kramer for unequal group sizes).
pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64) -> Result<Vec<TukeyPair>> {
    let anova = one_way_anova(groups)?;
    let q = studentized_range_q(alpha, groups.len(), anova.df_within)?;
    let mut out = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (ni, nj) = (anova.group_sizes[i] as f64, anova.group_sizes[j] as f64);
            let n_h = 2.0 / (1.0 / ni + 1.0 / nj);
            let critical = q * (anova.ms_within / n_h).sqrt();
            let mean_diff = anova.group_means[i] - anova.group_means[j];
            out.push(TukeyPair {
                i,
                j,
                mean_diff,
                critical,
                significant: mean_diff.abs() > critical,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, |r| r.len());
        if counts.is_empty() || cols == 0 || counts.iter().any(|r| r.len() != cols) {
            return domain("contingency table must be a non-empty rectangle");
        }
        Ok(Self {
            row_labels: (0..counts.len()).map(|i| format!("r{i}")).collect(),
            col_labels: (0..cols).map(|j| format!("c{j}")).collect(),
            counts,
        })
    }

    pub fn with_labels(mut self, rows: Vec<String>, cols: Vec<String>) -> Result<Self> {
        if rows.len() != self.counts.len() || cols.len() != self.counts[0].len() {
            return domain("label count does not match table shape");
        }
        self.row_labels = rows;
        self.col_labels = cols;
        Ok(self)
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.counts.len(), self.counts[0].len());
        Self {
            counts: (0..c).map(|j| (0..r).map(|i| self.counts[i][j]).collect()).collect(),
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
    pub expected: Vec<Vec<f64>>,
    /// (|O − E| − 0.5) / √E per cell.
    pub residuals: Vec<Vec<f64>>,
}

/// Continuity-corrected standardized residual of one cell.
pub fn standardized_residual(observed: f64, expected: f64) -> f64 {
    ((observed - expected).abs() - 0.5) / expected.sqrt()
}

pub fn chi_square(table: &ContingencyTable) -> Result<ChiSquare> {
    let rows = &table.counts;
    let (r, c) = (rows.len(), rows[0].len());
    let row_tot: Vec<f64> = rows.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let col_tot: Vec<f64> = (0..c).map(|j| rows.iter().map(|row| row[j]).sum::<u64>() as f64).collect();
    let total: f64 = row_tot.iter().sum();
    if row_tot.iter().chain(&col_tot).any(|m| *m == 0.0) {
        return domain("contingency table has a zero margin");
    }
    let mut statistic = 0.0;
    let mut expected = vec![vec![0.0; c]; r];
    let mut residuals = vec![vec![0.0; c]; r];
    for i in 0..r {
        for j in 0..c {
            let e = row_tot[i] * col_tot[j] / total;
            let o = rows[i][j] as f64;
            statistic += (o - e).powi(2) / e;
            expected[i][j] = e;
            residuals[i][j] = standardized_residual(o, e);
        }
    }
    let df = (r - 1) * (c - 1);
    let p = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).expect("df > 0").sf(statistic)
    };
    Ok(ChiSquare {
        statistic,
        df,
        p,
        expected,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    EqualFrequency,
    EqualWidth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    /// Bin index per value, 0 = lowest.
    pub labels: Vec<usize>,
    /// Lower edges of bins 1.. (a value at or above `cuts[k]` is in bin k + 1 or higher).
    pub cuts: Vec<f64>,
    /// All values identical under equal-width binning; everything is in bin 0.
    pub degenerate: bool,
}

impl Discretized {
    pub fn counts(&self, bins: usize) -> Vec<usize> {
        let mut c = vec![0; bins];
        for l in &self.labels {
            c[*l] += 1;
        }
        c
    }
}

pub fn discretize(values: &[f64], mode: BinMode, bins: usize) -> Result<Discretized> {
    if bins < 2 {
        return domain("discretization needs at least 2 bins");
    }
    if values.is_empty() {
        return domain("nothing to discretize");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return domain("values must be finite");
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let cuts: Vec<f64> = match mode {
        BinMode::EqualWidth => {
            if lo == hi {
                return Ok(Discretized {
                    labels: vec![0; values.len()],
                    cuts: Vec::new(),
                    degenerate: true,
                });
            }
            let width = (hi - lo) / bins as f64;
            (1..bins).map(|k| lo + width * k as f64).collect()
        }
        BinMode::EqualFrequency => {
            sorted.dedup();
            if sorted.len() < 2 {
                return domain("equal-frequency binning needs at least two distinct values");
            }
            let mut all = values.to_vec();
            all.sort_by(f64::total_cmp);
            (1..bins).map(|k| quantile(&all, k as f64 / bins as f64)).collect()
        }
    };
    let labels = values
        .iter()
        .map(|v| cuts.iter().take_while(|c| v >= *c).count())
        .collect();
    Ok(Discretized {
        labels,
        cuts,
        degenerate: false,
    })
}

/// Symbol for a bin: `L`/`H` for two bins, `VL`/`L`/`H`/`VH` for four,
/// `B<k>` otherwise.
pub fn bin_symbol(bin: usize, bins: usize) -> String {
    match (bins, bin) {
        (2, 0) => "L".into(),
        (2, 1) => "H".into(),
        (4, 0) => "VL".into(),
        (4, 1) => "L".into(),
        (4, 2) => "H".into(),
        (4, 3) => "VH".into(),
        _ => format!("B{bin}"),
    }
}

/// A labeled test result for report emission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRecord {
    pub test: String,
    pub statistic: f64,
    pub df: String,
    pub p: f64,
    pub significant_05: bool,
    pub significant_01: bool,
}

impl TestRecord {
    pub fn new(test: impl Into<String>, statistic: f64, df: String, p: f64) -> Self {
        Self {
            test: test.into(),
            statistic,
            df,
            p,
            significant_05: p < 0.05,
            significant_01: p < 0.01,
        }
    }
}

impl From<Error> for TestRecord {
    fn from(e: Error) -> Self {
        Self {
            test: format!("error: {e}"),
            statistic: f64::NAN,
            df: String::new(),
            p: f64::NAN,
            significant_05: false,
            significant_01: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_test_examples() {
        let t = two_sample_z(5.0, 5.0, 1.0, 10, 10).unwrap();
        assert_eq!(t.z_abs, 0.0);
        assert!((t.p_two_sided - 1.0).abs() < 1e-12);
        let t = two_sample_z(10.0, 8.0, 2.0, 100, 100).unwrap();
        assert!((t.z_abs - 2.0 / (2.0 * 0.02f64.sqrt())).abs() < 1e-12);
        assert!((t.z_abs - 7.0711).abs() < 1e-4);
        let u = two_sample_z(8.0, 10.0, 2.0, 100, 100).unwrap();
        assert_eq!(t.z_abs, u.z_abs);
        assert!(two_sample_z(1.0, 2.0, 0.0, 3, 3).is_err());
    }

    #[test]
    fn normal_tail_reference_values() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-12);
        assert!((normal_sf(1.959_963_984_540_054) - 0.025).abs() < 1e-9);
        assert!((2.0 * normal_sf(2.575_829_303_548_901) - 0.01).abs() < 1e-9);
    }

    #[test]
    fn anova_fixture() {
        let a = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((a.f.unwrap() - 13.5).abs() < 1e-12);
        assert_eq!((a.df_between, a.df_within), (1, 4));
        assert!(a.p.unwrap() < 0.05);
        let permuted = one_way_anova(&[vec![3.0, 1.0, 2.0], vec![6.0, 4.0, 5.0]]).unwrap();
        assert_eq!(a.f, permuted.f);
    }

    #[test]
    fn anova_degenerate_is_undefined() {
        let a = one_way_anova(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        assert!(a.f.is_none() && a.p.is_none());
        assert!(one_way_anova(&[vec![1.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn studentized_range_lookup() {
        assert_eq!(studentized_range_q(0.05, 3, 10).unwrap(), 3.877);
        assert_eq!(studentized_range_q(0.01, 3, 10).unwrap(), 5.270);
        // finite df never reaches the infinite row: 1e6 uses df = 120
        assert_eq!(studentized_range_q(0.05, 2, 1_000_000).unwrap(), 2.800);
        // df 27 falls back to the df = 24 row
        assert_eq!(studentized_range_q(0.05, 4, 27).unwrap(), studentized_range_q(0.05, 4, 24).unwrap());
        assert!(studentized_range_q(0.10, 3, 10).is_err());
        assert!(studentized_range_q(0.05, 11, 10).is_err());
    }

    fn spread(center: f64, sd: f64, n: usize) -> Vec<f64> {
        // deterministic symmetric sample with the requested sd-ish spread
        (0..n)
            .map(|i| center + sd * if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + (i / 2) as f64 * 0.01))
            .collect()
    }

    #[test]
    fn tukey_tiny_variance_separates_every_pair() {
        // with sd 0.01 the 0 vs 0.1 gap is ~10 sd wide, so it is significant too
        let groups = vec![spread(0.0, 0.01, 20), spread(0.1, 0.01, 20), spread(10.0, 0.01, 20)];
        let pairs = tukey_hsd(&groups, 0.05).unwrap();
        assert!(pairs.iter().all(|p| p.significant));
    }

    #[test]
    fn tukey_outlier_group() {
        let groups = vec![spread(0.0, 0.5, 20), spread(0.1, 0.5, 20), spread(10.0, 0.5, 20)];
        let pairs = tukey_hsd(&groups, 0.05).unwrap();
        let sig: Vec<(usize, usize)> = pairs.iter().filter(|p| p.significant).map(|p| (p.i, p.j)).collect();
        assert_eq!(sig, vec![(0, 2), (1, 2)]);
        let shifted: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| x + 100.0).collect()).collect();
        let again = tukey_hsd(&shifted, 0.05).unwrap();
        assert_eq!(
            pairs.iter().map(|p| p.significant).collect::<Vec<_>>(),
            again.iter().map(|p| p.significant).collect::<Vec<_>>()
        );
    }

    #[test]
    fn tukey_identical_means() {
        let g = vec![1.0, 2.0, 3.0];
        let pairs = tukey_hsd(&[g.clone(), g.clone(), g], 0.01).unwrap();
        assert!(pairs.iter().all(|p| !p.significant));
    }

    #[test]
    fn chi_square_independent_table() {
        let t = ContingencyTable::new(vec![vec![10, 20], vec![30, 60]]).unwrap();
        let c = chi_square(&t).unwrap();
        assert!(c.statistic.abs() < 1e-12);
        for (row_e, row_r) in c.expected.iter().zip(&c.residuals) {
            for (e, r) in row_e.iter().zip(row_r) {
                assert!((r + 0.5 / e.sqrt()).abs() < 1e-12);
            }
        }
        assert_eq!(c.df, 1);
    }

    #[test]
    fn residual_worked_value() {
        assert!((standardized_residual(60.0, 50.0) - 1.3435).abs() < 1e-4);
    }

    #[test]
    fn chi_square_transpose_and_brute_force() {
        let t = ContingencyTable::new(vec![vec![12, 5, 9], vec![3, 14, 8]]).unwrap();
        let a = chi_square(&t).unwrap();
        let b = chi_square(&t.transpose()).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
        assert_eq!(a.df, 2);
        let n = 51.0;
        let rows = [26.0, 25.0];
        let cols = [15.0, 19.0, 17.0];
        let mut brute = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                let e = rows[i] * cols[j] / n;
                brute += (t.counts[i][j] as f64 - e).powi(2) / e;
            }
        }
        assert!((a.statistic - brute).abs() < 1e-12);
        assert!(chi_square(&ContingencyTable::new(vec![vec![0, 0], vec![1, 2]]).unwrap()).is_err());
    }

    #[test]
    fn discretize_examples() {
        let d = discretize(&[1.0, 2.0, 3.0, 4.0], BinMode::EqualFrequency, 2).unwrap();
        assert_eq!(d.labels, vec![0, 0, 1, 1]);
        let d = discretize(&[0.0, 100.0], BinMode::EqualWidth, 4).unwrap();
        assert_eq!(d.cuts, vec![25.0, 50.0, 75.0]);
        assert_eq!(d.labels, vec![0, 3]);
        let vpp = [0.0, 37.0, 88.0, 120.0, 149.0, 200.0];
        let d = discretize(&vpp, BinMode::EqualWidth, 4).unwrap();
        assert_eq!(d.cuts, vec![50.0, 100.0, 150.0]);
        assert_eq!(d.labels, vec![0, 0, 1, 2, 2, 3]);
    }

    #[test]
    fn discretize_degenerate_cases() {
        let d = discretize(&[5.0, 5.0, 5.0], BinMode::EqualWidth, 4).unwrap();
        assert!(d.degenerate);
        assert!(discretize(&[5.0, 5.0], BinMode::EqualFrequency, 2).is_err());
        assert!(discretize(&[1.0, 2.0], BinMode::EqualFrequency, 1).is_err());
    }

    #[test]
    fn bin_symbols() {
        assert_eq!(bin_symbol(1, 2), "H");
        assert_eq!(bin_symbol(0, 4), "VL");
        assert_eq!(bin_symbol(3, 4), "VH");
    }
}
