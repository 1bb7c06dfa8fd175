//! Course attrition: covariate preparation and proportional-hazards fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::learn::features::FeatureVector;
use crate::learn::logistic::{train_logistic, CostScheme, LogisticConfig};
use crate::linalg::{dot, invert_spd, norm, solve_spd, Matrix};
use crate::stats::{mean, normal_sf, pearson, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    /// Standardized before fitting.
    Numeric,
    /// 0/1, left as is.
    Binary,
    /// Small integer codes, left as is.
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
}

impl Covariate {
    pub fn new(name: impl Into<String>, kind: CovariateKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub student_id: String,
    /// Weeks of active participation.
    pub duration: f64,
    /// Dropped out before the final week; otherwise censored.
    pub event: bool,
    /// One value per schema covariate.
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalData {
    pub schema: Vec<Covariate>,
    pub records: Vec<SurvivalRecord>,
}

impl SurvivalData {
    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            if r.covariates.len() != self.schema.len() {
                return domain(format!(
                    "record {} has {} covariates, schema has {}",
                    r.student_id,
                    r.covariates.len(),
                    self.schema.len()
                ));
            }
            if !(r.duration > 0.0) || !r.duration.is_finite() {
                return domain(format!("record {} has non-positive duration", r.student_id));
            }
            if r.covariates.iter().any(|x| !x.is_finite()) {
                return domain(format!("record {} has a non-finite covariate", r.student_id));
            }
        }
        Ok(())
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.covariates[j]).collect()
    }

    /// Keeps only the listed covariate positions, in the given order.
    fn select(&self, keep: &[usize]) -> Self {
        Self {
            schema: keep.iter().map(|j| self.schema[*j].clone()).collect(),
            records: self
                .records
                .iter()
                .map(|r| SurvivalRecord {
                    covariates: keep.iter().map(|j| r.covariates[*j]).collect(),
                    ..r.clone()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub data: SurvivalData,
    pub diagnostics: Vec<String>,
}

impl Prepared {
    pub fn kept(&self) -> Vec<&str> {
        self.data.schema.iter().map(|c| c.name.as_str()).collect()
    }
}

/// Z-scores numeric covariates, drops constant ones, then walks covariates in
/// declaration order and drops any whose |r| with an already kept covariate
/// reaches `corr_threshold`.
pub fn prepare_covariates(data: &SurvivalData, corr_threshold: f64) -> Result<Prepared> {
    if data.records.len() < 2 {
        return domain("covariate preparation needs at least 2 records");
    }
    data.validate()?;
    let mut diagnostics = Vec::new();
    let mut out = data.clone();
    let mut candidates = Vec::new();
    for (j, cov) in data.schema.iter().enumerate() {
        let col = data.column(j);
        let sd = sample_sd(&col);
        if !(sd > 0.0) {
            diagnostics.push(format!("dropped {}: zero variance", cov.name));
            continue;
        }
        if cov.kind == CovariateKind::Numeric {
            let m = mean(&col);
            for r in out.records.iter_mut() {
                r.covariates[j] = (r.covariates[j] - m) / sd;
            }
        }
        candidates.push(j);
    }
    let mut kept: Vec<usize> = Vec::new();
    for j in candidates {
        let col = out.column(j);
        let clash = kept.iter().find_map(|k| {
            let r = pearson(&out.column(*k), &col)?;
            (r.abs() >= corr_threshold).then_some((*k, r))
        });
        match clash {
            Some((k, r)) => diagnostics.push(format!(
                "dropped {}: |r| = {:.3} with {}",
                data.schema[j].name,
                r.abs(),
                data.schema[k].name
            )),
            None => kept.push(j),
        }
    }
    Ok(Prepared {
        data: out.select(&kept),
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoxConfig {
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for CoxConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardModel {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub hazard_ratio: Vec<f64>,
    pub se: Vec<f64>,
    pub p: Vec<f64>,
    pub log_likelihood: f64,
    /// Partial log-likelihood after each accepted step, starting at β = 0.
    pub ll_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// How much more (positive) or less (negative) likely the event is per unit
/// increase, as a fraction: HR − 1.
pub fn relative_risk_change(hazard_ratio: f64) -> f64 {
    hazard_ratio - 1.0
}

struct CoxProblem<'a> {
    x: Vec<&'a [f64]>,
    time: Vec<f64>,
    event: Vec<bool>,
    p: usize,
}

impl<'a> CoxProblem<'a> {
    fn new(data: &'a SurvivalData) -> Self {
        // longest duration first, so risk sets grow as we walk
        let mut idx: Vec<usize> = (0..data.records.len()).collect();
        idx.sort_by(|a, b| {
            let (ra, rb) = (&data.records[*a], &data.records[*b]);
            rb.duration
                .total_cmp(&ra.duration)
                .then_with(|| ra.student_id.cmp(&rb.student_id))
        });
        Self {
            x: idx.iter().map(|i| data.records[*i].covariates.as_slice()).collect(),
            time: idx.iter().map(|i| data.records[*i].duration).collect(),
            event: idx.iter().map(|i| data.records[*i].event).collect(),
            p: data.schema.len(),
        }
    }

    /// Breslow partial log-likelihood, gradient and negative Hessian.
    fn evaluate(&self, beta: &[f64]) -> (f64, Vec<f64>, Matrix) {
        let p = self.p;
        let eta: Vec<f64> = self.x.iter().map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![vec![0.0; p]; p];
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut info = vec![vec![0.0; p]; p];
        let n = self.x.len();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j < n && self.time[j] == self.time[i] {
                let w = (eta[j] - shift).exp();
                s0 += w;
                for a in 0..p {
                    s1[a] += w * self.x[j][a];
                    for b in 0..p {
                        s2[a][b] += w * self.x[j][a] * self.x[j][b];
                    }
                }
                j += 1;
            }
            let events: Vec<usize> = (i..j).filter(|k| self.event[*k]).collect();
            if !events.is_empty() {
                let d = events.len() as f64;
                for k in &events {
                    ll += eta[*k];
                    for a in 0..p {
                        grad[a] += self.x[*k][a];
                    }
                }
                ll -= d * (s0.ln() + shift);
                for a in 0..p {
                    let ma = s1[a] / s0;
                    grad[a] -= d * ma;
                    for b in 0..p {
                        info[a][b] += d * (s2[a][b] / s0 - ma * s1[b] / s0);
                    }
                }
            }
            i = j;
        }
        (ll, grad, info)
    }

    fn log_likelihood(&self, beta: &[f64]) -> f64 {
        self.evaluate(beta).0
    }
}

/// Cox proportional hazards with Breslow ties, fitted by Newton steps halved
/// until the partial likelihood does not decrease.
pub fn fit_cox(data: &SurvivalData, cfg: &CoxConfig) -> Result<HazardModel> {
    data.validate()?;
    if data.schema.is_empty() {
        return domain("no covariates to fit");
    }
    if !data.records.iter().any(|r| r.event) {
        return domain("no events: the hazard model is not identified");
    }
    let prob = CoxProblem::new(data);
    let p = data.schema.len();
    let mut beta = vec![0.0; p];
    let (mut ll, mut grad, mut info) = prob.evaluate(&beta);
    let mut history = vec![ll];
    let mut iterations = 0;
    // Newton decrement g'I^{-1}g/2: invariant to the sample size and to
    // covariate scaling, unlike the raw gradient norm
    let decrement = |g: &[f64], info: &Matrix| match solve_spd(info, g) {
        Some(d) => 0.5 * dot(g, &d),
        None => norm(g),
    };
    let mut converged = decrement(&grad, &info) < cfg.tolerance;
    while iterations < cfg.max_iter && !converged {
        // a singular information matrix falls back to a gradient step
        let dir = solve_spd(&info, &grad).unwrap_or_else(|| grad.clone());
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(&dir).map(|(b, d)| b + scale * d).collect();
            let lc = prob.log_likelihood(&cand);
            if lc >= ll {
                beta = cand;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        (ll, grad, info) = prob.evaluate(&beta);
        history.push(ll);
        iterations += 1;
        converged = decrement(&grad, &info) < cfg.tolerance;
    }
    let se: Vec<f64> = match invert_spd(&info) {
        Some(inv) => (0..p).map(|a| inv[a][a].sqrt()).collect(),
        None => vec![f64::NAN; p],
    };
    let pvals = beta
        .iter()
        .zip(&se)
        .map(|(b, s)| 2.0 * normal_sf((b / s).abs()))
        .collect();
    Ok(HazardModel {
        names: data.schema.iter().map(|c| c.name.clone()).collect(),
        hazard_ratio: beta.iter().map(|b| b.exp()).collect(),
        beta,
        se,
        p: pvals,
        log_likelihood: ll,
        ll_history: history,
        iterations,
        converged,
    })
}

/// Partial log-likelihood at an arbitrary β (for profile and grid checks).
pub fn cox_partial_log_likelihood(data: &SurvivalData, beta: &[f64]) -> Result<f64> {
    data.validate()?;
    if beta.len() != data.schema.len() {
        return domain("beta length differs from the covariate count");
    }
    Ok(CoxProblem::new(data).log_likelihood(beta))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteHazardModel {
    pub names: Vec<String>,
    /// Log-odds coefficients of the weekly dropout hazard.
    pub beta: Vec<f64>,
    pub odds_ratio: Vec<f64>,
    /// Baseline log-odds per week, week 1 first.
    pub baseline: BTreeMap<u32, f64>,
    pub converged: bool,
}

/// Discrete-time alternative: one row per record and active week, labelled 1
/// only in the week of an event, with week dummies as the baseline hazard.
pub fn fit_discrete_hazard(data: &SurvivalData, lambda: f64) -> Result<DiscreteHazardModel> {
    data.validate()?;
    if !data.records.iter().any(|r| r.event) {
        return domain("no events: the hazard model is not identified");
    }
    let mut rows = Vec::new();
    for r in &data.records {
        let weeks = r.duration.ceil() as u32;
        for w in 1..=weeks {
            let mut features: BTreeMap<String, f64> = data
                .schema
                .iter()
                .zip(&r.covariates)
                .map(|(c, x)| (format!("cov:{}", c.name), *x))
                .collect();
            if w > 1 {
                features.insert(format!("week:{w:04}"), 1.0);
            }
            rows.push(FeatureVector {
                features,
                label: usize::from(r.event && w == weeks),
                group_id: r.student_id.clone(),
            });
        }
    }
    let model = train_logistic(
        &rows,
        &LogisticConfig {
            lambda,
            costs: CostScheme::Unit,
            rare_threshold: 1,
            ..Default::default()
        },
    )?;
    let weights: BTreeMap<String, f64> = model.weights(0).into_iter().collect();
    let intercept = weights["(intercept)"];
    let beta: Vec<f64> = data
        .schema
        .iter()
        .map(|c| weights.get(&format!("cov:{}", c.name)).copied().unwrap_or(0.0))
        .collect();
    let max_week = data.records.iter().map(|r| r.duration.ceil() as u32).max().unwrap_or(1);
    let baseline = (1..=max_week)
        .map(|w| {
            let shift = weights.get(&format!("week:{w:04}")).copied().unwrap_or(0.0);
            (w, intercept + shift)
        })
        .collect();
    Ok(DiscreteHazardModel {
        names: data.schema.iter().map(|c| c.name.clone()).collect(),
        odds_ratio: beta.iter().map(|b| b.exp()).collect(),
        beta,
        baseline,
        converged: model.converged,
    })
}
