//! Stage orchestration. Every stage is a pure function of the encoded corpus
//! and the configuration and returns named tables; writing them is separate.
//!
//! Input, schema and configuration problems are errors. Statistics that are
//! undefined on the data at hand (one class, no events, a constant matrix)
//! are reported as `NA` rows with a note instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::actions::{corpus_weights, summarize_actions, BehavioralActionVector, BehavioralCatalog, Category, Level};
use crate::cluster::{self, KMeansResult, METRIC_NAMES};
use crate::config::{sha256_hex, HazardKind, PipelineConfig};
use crate::error::{domain, Error, Result};
use crate::exec;
use crate::ingest::{
    compute_engagement, compute_play_proportion, encode_log, vwss_record, ClickOp, ParsedLog, Vwss, VWSS_COLUMNS,
};
use crate::ipi::{compute_ipi, interpret, Processing};
use crate::learn::features::token_features;
use crate::learn::metrics::multiclass_agreement;
use crate::learn::trajectory::trajectory_features;
use crate::learn::{
    build_trajectories, cross_validate, dropout_week_labels, evaluate_metrics, train_logistic, FeatureConfig,
    FeatureVector, LogisticConfig, RowContext, VideoObservation,
};
use crate::markov::{self, fit_markov, information_criteria};
use crate::sna::{self, Adjacency};
use crate::stats::{self, bin_symbol, BinMode, ContingencyTable, TestRecord};
use crate::survival::{
    fit_cox, fit_discrete_hazard, prepare_covariates, relative_risk_change, significance_stars, CoxConfig,
    Covariate, CovariateKind, SurvivalData, SurvivalRecord,
};
use crate::synth::{Cohort, SECONDS_PER_WEEK};

/// A named tab-separated table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width of {}", self.name);
        self.rows.push(row);
    }

    /// A `# config_sha256=` line, the header, then the rows.
    pub fn write<W: Write>(&self, config_hash: &str, mut out: W) -> Result<()> {
        writeln!(out, "# config_sha256={config_hash}")?;
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render(&self, config_hash: &str) -> String {
        let mut buf = Vec::new();
        self.write(config_hash, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("tables are UTF-8")
    }
}

pub fn write_tables(dir: &Path, tables: &[Table], config_hash: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in tables {
        let f = File::create(dir.join(&t.name))?;
        t.write(config_hash, BufWriter::new(f))?;
    }
    Ok(())
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

fn level_symbol(l: Level) -> &'static str {
    match l {
        Level::High => "H",
        Level::Low => "L",
    }
}

fn processing_name(p: Processing) -> &'static str {
    match p {
        Processing::High => "high",
        Processing::Neutral => "neutral",
        Processing::Low => "low",
    }
}

/// Data-dependent failures become notes; anything else stops the run.
fn soft<T>(r: Result<T>) -> Result<std::result::Result<T, String>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e @ (Error::Domain(_) | Error::Undefined(_))) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}

/// Course participation of one student.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudentStatus {
    pub last_week: u32,
    /// Position of the last active week among the course's active weeks,
    /// starting at 1.
    pub duration: u32,
    /// Last active before the course's final active week.
    pub event: bool,
}

/// Everything the stages share: encoded sequences and their row-level scores.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub rows: Vec<Vwss>,
    pub weights: Vec<[f64; Category::COUNT]>,
    pub actions: Vec<BehavioralActionVector>,
    pub ipi: Vec<i32>,
    pub engagement: Vec<f64>,
    /// Split at the median separately for each video.
    pub engagement_level: Vec<Level>,
    pub vpp: Vec<Option<f64>>,
    /// Four equal-width bins over all available play proportions.
    pub vpp_category: Vec<Option<usize>>,
    pub week: Vec<u32>,
    pub students: Vec<String>,
    pub student_rows: Vec<Vec<usize>>,
    pub row_student: Vec<usize>,
    pub status: Vec<StudentStatus>,
    pub final_week: u32,
    pub diagnostics: Vec<String>,
    pub catalog: BehavioralCatalog,
}

impl Corpus {
    pub fn build(log: &ParsedLog, catalog: BehavioralCatalog, cfg: &PipelineConfig) -> Result<Self> {
        if let Some(d) = log.diagnostics.first() {
            return Err(Error::Schema {
                line: d.line,
                message: d.message.clone(),
            });
        }
        let rows = encode_log(log, cfg.scroll_window)?;
        if rows.len() < 2 {
            return domain("the log holds fewer than two student-video sequences");
        }
        let mut diagnostics = Vec::new();
        let tokens: Vec<&[ClickOp]> = rows.iter().map(|v| v.tokens.as_slice()).collect();
        let weights = corpus_weights(&tokens, &catalog)?;
        let actions = summarize_actions(&weights)?;
        let ipi = actions.iter().map(|a| compute_ipi(a, &cfg.ipi_weights)).collect();
        let engagement: Vec<f64> = rows.iter().map(|v| compute_engagement(v, cfg.engagement_variant)).collect();

        let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, v) in rows.iter().enumerate() {
            by_video.entry(&v.video_id).or_default().push(i);
        }
        let mut engagement_level = vec![Level::High; rows.len()];
        for (video, idx) in &by_video {
            let vals: Vec<f64> = idx.iter().map(|i| engagement[*i]).collect();
            match stats::discretize(&vals, BinMode::EqualFrequency, 2) {
                Ok(d) => {
                    for (i, l) in idx.iter().zip(d.labels) {
                        if l == 0 {
                            engagement_level[*i] = Level::Low;
                        }
                    }
                }
                Err(_) => diagnostics.push(format!("video {video}: engagement has one value; all viewers marked H")),
            }
        }

        let vpp: Vec<Option<f64>> = rows.iter().map(|v| compute_play_proportion(v).ok()).collect();
        let missing = vpp.iter().filter(|x| x.is_none()).count();
        if missing > 0 {
            diagnostics.push(format!("{missing} sequences carry no video length; play proportion unavailable"));
        }
        let present: Vec<f64> = vpp.iter().flatten().copied().collect();
        let mut vpp_category = vec![None; rows.len()];
        if !present.is_empty() {
            let d = stats::discretize(&present, BinMode::EqualWidth, 4)?;
            let mut labels = d.labels.into_iter();
            for (slot, x) in vpp_category.iter_mut().zip(&vpp) {
                if x.is_some() {
                    *slot = labels.next();
                }
            }
        }

        let week: Vec<u32> = rows
            .iter()
            .map(|v| {
                let t = v.first_time().unwrap_or(0.0);
                ((t / SECONDS_PER_WEEK).floor() + 1.0).clamp(1.0, u32::MAX as f64) as u32
            })
            .collect();

        let mut by_student: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, v) in rows.iter().enumerate() {
            by_student.entry(&v.student_id).or_default().push(i);
        }
        let students: Vec<String> = by_student.keys().map(|s| s.to_string()).collect();
        let student_rows: Vec<Vec<usize>> = by_student.into_values().collect();
        let mut row_student = vec![0; rows.len()];
        for (s, idx) in student_rows.iter().enumerate() {
            for i in idx {
                row_student[*i] = s;
            }
        }
        let active: BTreeSet<u32> = week.iter().copied().collect();
        let position: BTreeMap<u32, u32> = active.iter().enumerate().map(|(p, w)| (*w, p as u32 + 1)).collect();
        let final_week = *active.last().expect("at least two rows");
        let n_active = active.len() as u32;
        let status = student_rows
            .iter()
            .map(|idx| {
                let last_week = idx.iter().map(|i| week[*i]).max().expect("students have rows");
                let duration = position[&last_week];
                StudentStatus {
                    last_week,
                    duration,
                    event: duration < n_active,
                }
            })
            .collect();

        Ok(Self {
            rows,
            weights,
            actions,
            ipi,
            engagement,
            engagement_level,
            vpp,
            vpp_category,
            week,
            students,
            student_rows,
            row_student,
            status,
            final_week,
            diagnostics,
            catalog,
        })
    }

    /// The configured focus video, or the one with the most viewers (ties go
    /// to the smallest id).
    pub fn focus_video(&self, cfg: &PipelineConfig) -> Result<String> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for v in &self.rows {
            *counts.entry(&v.video_id).or_default() += 1;
        }
        if let Some(v) = &cfg.predict.focus_video {
            return if counts.contains_key(v.as_str()) {
                Ok(v.clone())
            } else {
                Err(Error::Config(format!("focus video {v:?} does not occur in the log")))
            };
        }
        let mut best: Option<(&str, usize)> = None;
        for (v, c) in counts {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((v, c));
            }
        }
        Ok(best.expect("corpus is not empty").0.to_string())
    }

    fn focus_rows(&self, cfg: &PipelineConfig) -> Result<Vec<usize>> {
        let focus = self.focus_video(cfg)?;
        Ok((0..self.rows.len()).filter(|i| self.rows[*i].video_id == focus).collect())
    }

    fn vpp_symbol(&self, i: usize) -> String {
        self.vpp_category[i].map_or_else(|| "NA".into(), |c| bin_symbol(c, 4))
    }
}

pub fn encode_tables(c: &Corpus) -> Vec<Table> {
    let mut vwss = Table::new("vwss.tsv", &VWSS_COLUMNS);
    for v in &c.rows {
        vwss.push(vwss_record(v));
    }
    let mut eng = Table::new(
        "engagement.tsv",
        &[
            "student_id",
            "video_id",
            "week",
            "engagement_seconds",
            "engagement_level",
            "play_proportion",
            "vpp_category",
        ],
    );
    for (i, v) in c.rows.iter().enumerate() {
        eng.push(vec![
            v.student_id.clone(),
            v.video_id.clone(),
            c.week[i].to_string(),
            num(c.engagement[i]),
            level_symbol(c.engagement_level[i]).into(),
            opt(c.vpp[i]),
            c.vpp_symbol(i),
        ]);
    }
    vec![vwss, eng]
}

pub fn actions_tables(c: &Corpus) -> Vec<Table> {
    let mut header = vec!["student_id".to_string(), "video_id".to_string()];
    header.extend(Category::ALL.iter().map(|c| format!("{c}_weight")));
    header.extend(Category::ALL.iter().map(|c| format!("{c}_level")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new("actions.tsv", &header);
    for (i, v) in c.rows.iter().enumerate() {
        let mut row = vec![v.student_id.clone(), v.video_id.clone()];
        row.extend(c.weights[i].iter().map(|w| num(*w)));
        row.extend(Category::ALL.iter().map(|k| level_symbol(c.actions[i].level(*k)).to_string()));
        t.push(row);
    }
    vec![t]
}

pub fn ipi_tables(c: &Corpus) -> Vec<Table> {
    let mut t = Table::new("ipi.tsv", &["student_id", "video_id", "ipi", "processing"]);
    for (i, v) in c.rows.iter().enumerate() {
        t.push(vec![
            v.student_id.clone(),
            v.video_id.clone(),
            c.ipi[i].to_string(),
            processing_name(interpret(c.ipi[i])).into(),
        ]);
    }
    vec![t]
}

fn student_matrix(c: &Corpus, s: usize, cfg: &PipelineConfig) -> Vec<f64> {
    let seqs: Vec<&[ClickOp]> = c.student_rows[s].iter().map(|i| c.rows[*i].tokens.as_slice()).collect();
    match fit_markov(&seqs, 1, cfg.markov.smoothing) {
        Ok((m, _)) => m.flattened().to_vec(),
        // no transitions at all: nothing distinguishes the rows
        Err(_) => vec![1.0 / ClickOp::COUNT as f64; ClickOp::COUNT * ClickOp::COUNT],
    }
}

/// k-means over per-student order-1 transition matrices.
pub fn markov_clustering(c: &Corpus, cfg: &PipelineConfig) -> Result<KMeansResult> {
    let mats = exec::map_range(c.students.len(), |s| student_matrix(c, s, cfg));
    markov::cluster_transition_matrices(&mats, cfg.cluster.k_markov, cfg.seed, cfg.cluster.restarts)
}

pub fn metric_clustering(c: &Corpus, cfg: &PipelineConfig) -> Result<cluster::VwssClustering> {
    markov::cluster_vwss_metrics(&c.rows, cfg.cluster.k_metrics, cfg.seed, cfg.cluster.restarts)
}

fn mean_of(idx: &[usize], f: impl Fn(usize) -> Option<f64>) -> Option<f64> {
    let xs: Vec<f64> = idx.iter().filter_map(|i| f(*i)).collect();
    (!xs.is_empty()).then(|| stats::mean(&xs))
}

pub fn cluster_tables(c: &Corpus, cfg: &PipelineConfig) -> Result<Vec<Table>> {
    let mut orders = Table::new(
        "markov_orders.tsv",
        &[
            "order",
            "log_likelihood",
            "params",
            "transitions",
            "aic",
            "bic",
            "student_log_likelihood",
            "student_params",
            "student_transitions",
            "student_aic",
            "student_bic",
            "best_aic",
            "best_bic",
        ],
    );
    let all: Vec<&[ClickOp]> = c.rows.iter().map(|v| v.tokens.as_slice()).collect();
    let mut fits = Vec::new();
    for order in 1..=cfg.markov.max_order {
        let pooled = fit_markov(&all, order, cfg.markov.smoothing).ok().map(|(_, r)| r);
        let per_student = exec::map_range(c.students.len(), |s| {
            let seqs: Vec<&[ClickOp]> = c.student_rows[s].iter().map(|i| all[*i]).collect();
            fit_markov(&seqs, order, cfg.markov.smoothing).ok().map(|(_, r)| r)
        });
        let (mut ll, mut p, mut n) = (0.0, 0usize, 0usize);
        for r in per_student.iter().flatten() {
            ll += r.log_likelihood;
            p += r.p;
            n += r.n;
        }
        let student = information_criteria(ll, p, n).ok().map(|(aic, bic)| (ll, p, n, aic, bic));
        fits.push((order, pooled, student));
    }
    let best = |key: fn(&markov::FitReport) -> f64| {
        fits.iter()
            .filter_map(|(o, r, _)| r.as_ref().map(|r| (*o, key(r))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(o, _)| o)
    };
    let (best_aic, best_bic) = (best(|r| r.aic), best(|r| r.bic));
    for (order, pooled, student) in &fits {
        let mut row = vec![order.to_string()];
        match pooled {
            Some(r) => row.extend([num(r.log_likelihood), r.p.to_string(), r.n.to_string(), num(r.aic), num(r.bic)]),
            None => row.extend(std::iter::repeat_n("NA".to_string(), 5)),
        }
        match student {
            Some((ll, p, n, aic, bic)) => row.extend([num(*ll), p.to_string(), n.to_string(), num(*aic), num(*bic)]),
            None => row.extend(std::iter::repeat_n("NA".to_string(), 5)),
        }
        row.push(u8::from(best_aic == Some(*order)).to_string());
        row.push(u8::from(best_bic == Some(*order)).to_string());
        orders.push(row);
    }

    let km = markov_clustering(c, cfg)?;
    let mut members = Table::new("markov_clusters.tsv", &["student_id", "cluster", "sequences"]);
    for (s, name) in c.students.iter().enumerate() {
        members.push(vec![
            name.clone(),
            km.assignments[s].to_string(),
            c.student_rows[s].len().to_string(),
        ]);
    }
    let mut centroids = Table::new("markov_centroids.tsv", &["cluster", "from", "to", "p"]);
    for (k, cen) in km.centroids.iter().enumerate() {
        for (cell, p) in cen.iter().enumerate() {
            centroids.push(vec![
                k.to_string(),
                ClickOp::ALL[cell / ClickOp::COUNT].to_string(),
                ClickOp::ALL[cell % ClickOp::COUNT].to_string(),
                num(*p),
            ]);
        }
    }

    let mc = metric_clustering(c, cfg)?;
    let mut header = vec!["student_id", "video_id", "cluster"];
    header.extend(METRIC_NAMES);
    let mut metrics = Table::new("metric_clusters.tsv", &header);
    for (i, v) in c.rows.iter().enumerate() {
        let mut row = vec![v.student_id.clone(), v.video_id.clone(), mc.assignments[i].to_string()];
        row.extend(mc.metrics[i].iter().map(|x| num(*x)));
        metrics.push(row);
    }

    let mut summary = Table::new(
        "cluster_summary.tsv",
        &["partition", "cluster", "members", "mean_ipi", "mean_engagement", "mean_play_proportion"],
    );
    let mut push_summary = |partition: &str, k: usize, n_members: usize, idx: &[usize]| {
        summary.push(vec![
            partition.into(),
            k.to_string(),
            n_members.to_string(),
            opt(mean_of(idx, |i| Some(c.ipi[i] as f64))),
            opt(mean_of(idx, |i| Some(c.engagement[i]))),
            opt(mean_of(idx, |i| c.vpp[i])),
        ]);
    };
    for k in 0..cfg.cluster.k_markov {
        let studs: Vec<usize> = (0..c.students.len()).filter(|s| km.assignments[*s] == k).collect();
        let idx: Vec<usize> = studs.iter().flat_map(|s| c.student_rows[*s].iter().copied()).collect();
        push_summary("markov", k, studs.len(), &idx);
    }
    for k in 0..cfg.cluster.k_metrics {
        let idx: Vec<usize> = (0..c.rows.len()).filter(|i| mc.assignments[*i] == k).collect();
        push_summary("metric", k, idx.len(), &idx);
    }
    Ok(vec![orders, members, centroids, metrics, summary])
}

struct Task {
    name: &'static str,
    condition: &'static str,
    rows: Vec<FeatureVector>,
    /// Positive class of a binary task; `None` for multiclass.
    positive: Option<usize>,
}

fn logistic_config(cfg: &PipelineConfig) -> LogisticConfig {
    LogisticConfig {
        lambda: cfg.predict.lambda,
        rare_threshold: cfg.predict.rare_threshold,
        ..LogisticConfig::default()
    }
}

fn sequence_config(prefix: Option<usize>, actions: bool) -> FeatureConfig {
    FeatureConfig {
        ngram_sizes: vec![4, 5],
        length: true,
        proportions: true,
        engagement: false,
        actions,
        patterns: actions,
        prefix,
    }
}

fn build_tasks(c: &Corpus, cfg: &PipelineConfig) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    let watched: Vec<usize> = (0..c.rows.len()).filter(|i| !c.rows[*i].tokens.is_empty()).collect();

    // engagement level from the click sequence, with and without action levels
    for (condition, with_actions) in [("base", false), ("actions", true)] {
        let fc = sequence_config(None, with_actions);
        let rows = exec::map(&watched, |&i| {
            let ctx = RowContext {
                actions: Some(&c.actions[i]),
                engagement: None,
                catalog: Some(&c.catalog),
            };
            FeatureVector {
                features: token_features(&c.rows[i].tokens, &ctx, &fc),
                label: usize::from(c.engagement_level[i] == Level::High),
                group_id: c.rows[i].student_id.clone(),
            }
        });
        tasks.push(Task {
            name: "engagement",
            condition,
            rows,
            positive: Some(1),
        });
    }

    // next click on the focus video from every proper prefix
    let focus = c.focus_rows(cfg)?;
    let mut next = Vec::new();
    for &i in &focus {
        let v = &c.rows[i];
        for k in 1..v.tokens.len() {
            next.push(FeatureVector {
                features: token_features(&v.tokens, &RowContext::default(), &sequence_config(Some(k), false)),
                label: v.tokens[k].index(),
                group_id: v.student_id.clone(),
            });
        }
    }
    tasks.push(Task {
        name: "next_click",
        condition: "prefix",
        rows: next,
        positive: None,
    });

    // in-video dropout from all but the final click
    let with_vpp: Vec<usize> = watched.iter().copied().filter(|i| c.vpp[*i].is_some()).collect();
    let rows = exec::map(&with_vpp, |&i| {
        let v = &c.rows[i];
        FeatureVector {
            features: token_features(&v.tokens, &RowContext::default(), &sequence_config(Some(v.tokens.len() - 1), false)),
            label: usize::from(c.vpp[i].expect("filtered") < cfg.predict.dropout_vpp),
            group_id: v.student_id.clone(),
        }
    });
    tasks.push(Task {
        name: "in_video_dropout",
        condition: "prefix",
        rows,
        positive: Some(1),
    });

    // course dropout, one row per student and active week
    let obs: Vec<VideoObservation> = with_vpp
        .iter()
        .map(|&i| VideoObservation {
            student_id: c.rows[i].student_id.clone(),
            video_id: c.rows[i].video_id.clone(),
            order: c.rows[i].first_time().unwrap_or(0.0),
            week: c.week[i],
            engagement: c.engagement[i],
            vpp: c.vpp[i].expect("filtered"),
            ipi: c.ipi[i] as f64,
        })
        .collect();
    let mut weekly = Vec::new();
    if !obs.is_empty() {
        let set = build_trajectories(&obs, &c.students)?;
        for t in &set.trajectories {
            for (week, label) in dropout_week_labels(&t.weeks, c.final_week) {
                let upto = t.weeks.iter().filter(|w| **w <= week).count();
                weekly.push(FeatureVector {
                    features: trajectory_features(t, upto, &[2, 3]),
                    label,
                    group_id: t.student_id.clone(),
                });
            }
        }
    }
    tasks.push(Task {
        name: "course_dropout",
        condition: "trajectory",
        rows: weekly,
        positive: Some(1),
    });
    Ok(tasks)
}

pub fn predict_tables(c: &Corpus, cfg: &PipelineConfig) -> Result<Vec<Table>> {
    let lcfg = logistic_config(cfg);
    let mut summary = Table::new(
        "predict_summary.tsv",
        &[
            "task",
            "condition",
            "rows",
            "groups",
            "classes",
            "status",
            "accuracy",
            "kappa",
            "fnr",
            "fnr_conventional",
            "tp",
            "fn",
            "fp",
            "tn",
            "converged",
        ],
    );
    let mut folds = Table::new("predict_folds.tsv", &["task", "condition", "fold", "accuracy"]);
    let mut weights = Table::new("predict_weights.tsv", &["task", "condition", "class", "feature", "weight"]);
    for task in build_tasks(c, cfg)? {
        let classes: BTreeSet<usize> = task.rows.iter().map(|r| r.label).collect();
        let groups: BTreeSet<&str> = task.rows.iter().map(|r| r.group_id.as_str()).collect();
        let mut row = vec![
            task.name.to_string(),
            task.condition.to_string(),
            task.rows.len().to_string(),
            groups.len().to_string(),
            classes.len().to_string(),
        ];
        let outcome = if classes.len() < 2 {
            Err("skipped: fewer than two classes".to_string())
        } else {
            soft(cross_validate(&task.rows, cfg.predict.folds, cfg.seed, &lcfg))?
                .map_err(|e| format!("skipped: {e}"))
        };
        match outcome {
            Err(note) => {
                row.push(note);
                row.extend(std::iter::repeat_n("NA".to_string(), 9));
            }
            Ok(report) => {
                let labels: Vec<usize> = task.rows.iter().map(|r| r.label).collect();
                row.push("ok".into());
                match task.positive {
                    Some(pos) => {
                        let m = evaluate_metrics(&report.predictions, &labels, pos)?;
                        row.extend([
                            num(m.accuracy),
                            num(m.kappa),
                            num(m.fnr),
                            num(m.fnr_conventional),
                            m.tp.to_string(),
                            m.fn_.to_string(),
                            m.fp.to_string(),
                            m.tn.to_string(),
                        ]);
                    }
                    None => {
                        let (acc, kappa) = multiclass_agreement(&report.predictions, &labels)?;
                        row.extend([num(acc), num(kappa)]);
                        row.extend(std::iter::repeat_n("NA".to_string(), 6));
                    }
                }
                row.push(u8::from(report.converged).to_string());
                for (f, a) in report.fold_accuracy.iter().enumerate() {
                    folds.push(vec![task.name.into(), task.condition.into(), f.to_string(), num(*a)]);
                }
                if let Ok(model) = train_logistic(&task.rows, &lcfg) {
                    let blocks = if model.classes.len() == 2 { 1 } else { model.classes.len() };
                    for b in 0..blocks {
                        let class = if blocks == 1 { model.classes[1] } else { model.classes[b] };
                        let class = match task.positive {
                            Some(_) => class.to_string(),
                            None => ClickOp::from_index(class).map_or(class.to_string(), |o| o.to_string()),
                        };
                        for (name, w) in model.top_features(b, 10) {
                            weights.push(vec![task.name.into(), task.condition.into(), class.clone(), name, num(w)]);
                        }
                    }
                }
            }
        }
        summary.push(row);
    }
    Ok(vec![summary, folds, weights])
}

fn category_covariate(c: Category) -> String {
    let mut out = String::new();
    for (i, ch) in c.as_str().chars().enumerate() {
        if ch.is_uppercase() && i > 0 {
            out.push('_');
        }
        out.push(ch.to_ascii_lowercase());
    }
    out
}

/// Per-student covariates: means over watched videos, binary levels by
/// majority, play-proportion category by rounded mean.
pub fn survival_data(c: &Corpus) -> (SurvivalData, Vec<String>) {
    let mut notes = Vec::new();
    let with_vpp = c.student_rows.iter().all(|idx| idx.iter().any(|i| c.vpp_category[*i].is_some()));
    if !with_vpp {
        notes.push("vpp dropped: some students have no video with a known length".to_string());
    }
    let mut schema = vec![Covariate::new("ipi", CovariateKind::Numeric)];
    schema.extend(Category::ALL.iter().map(|k| Covariate::new(category_covariate(*k), CovariateKind::Binary)));
    schema.push(Covariate::new("engagement", CovariateKind::Binary));
    if with_vpp {
        schema.push(Covariate::new("vpp", CovariateKind::Ordinal));
    }
    for name in ["jumped_forward", "jumped_backward", "engagement_seconds"] {
        schema.push(Covariate::new(name, CovariateKind::Numeric));
    }
    let majority = |idx: &[usize], f: &dyn Fn(usize) -> bool| {
        let high = idx.iter().filter(|i| f(**i)).count();
        f64::from(u8::from(2 * high >= idx.len()))
    };
    let records = c
        .student_rows
        .iter()
        .enumerate()
        .map(|(s, idx)| {
            let mean = |f: &dyn Fn(usize) -> f64| idx.iter().map(|i| f(*i)).sum::<f64>() / idx.len() as f64;
            let mut x = vec![mean(&|i| c.ipi[i] as f64)];
            for k in Category::ALL {
                x.push(majority(idx, &|i| c.actions[i].level(k) == Level::High));
            }
            x.push(majority(idx, &|i| c.engagement_level[i] == Level::High));
            if with_vpp {
                let cats: Vec<f64> = idx.iter().filter_map(|i| c.vpp_category[*i]).map(|k| k as f64).collect();
                x.push(stats::mean(&cats).round());
            }
            x.push(mean(&|i| c.rows[i].jumped_forward));
            x.push(mean(&|i| c.rows[i].jumped_backward));
            x.push(mean(&|i| c.engagement[i]));
            SurvivalRecord {
                student_id: c.students[s].clone(),
                duration: c.status[s].duration as f64,
                event: c.status[s].event,
                covariates: x,
            }
        })
        .collect();
    (SurvivalData { schema, records }, notes)
}

pub fn survival_tables(c: &Corpus, cfg: &PipelineConfig) -> Result<Vec<Table>> {
    let (data, mut notes) = survival_data(c);
    let mut header = vec!["student_id", "duration", "event"];
    header.extend(data.schema.iter().map(|s| s.name.as_str()));
    let mut records = Table::new("survival_records.tsv", &header);
    for r in &data.records {
        let mut row = vec![r.student_id.clone(), num(r.duration), u8::from(r.event).to_string()];
        row.extend(r.covariates.iter().map(|x| num(*x)));
        records.push(row);
    }
    let mut model = Table::new(
        "survival_model.tsv",
        &["model", "covariate", "beta", "ratio", "se", "p", "stars", "risk_change", "converged"],
    );
    match soft(prepare_covariates(&data, cfg.survival.corr_threshold))? {
        Err(e) => notes.push(format!("skipped: {e}")),
        Ok(prep) => {
            notes.extend(prep.diagnostics.iter().cloned());
            match cfg.survival.model {
                HazardKind::Cox => match soft(fit_cox(&prep.data, &CoxConfig::default()))? {
                    Err(e) => notes.push(format!("skipped: {e}")),
                    Ok(m) => {
                        for a in 0..m.names.len() {
                            model.push(vec![
                                "cox".into(),
                                m.names[a].clone(),
                                num(m.beta[a]),
                                num(m.hazard_ratio[a]),
                                num(m.se[a]),
                                num(m.p[a]),
                                significance_stars(m.p[a]).into(),
                                num(relative_risk_change(m.hazard_ratio[a])),
                                u8::from(m.converged).to_string(),
                            ]);
                        }
                    }
                },
                HazardKind::Discrete => match soft(fit_discrete_hazard(&prep.data, cfg.predict.lambda))? {
                    Err(e) => notes.push(format!("skipped: {e}")),
                    Ok(m) => {
                        let conv = u8::from(m.converged).to_string();
                        for a in 0..m.names.len() {
                            model.push(vec![
                                "discrete".into(),
                                m.names[a].clone(),
                                num(m.beta[a]),
                                num(m.odds_ratio[a]),
                                "NA".into(),
                                "NA".into(),
                                String::new(),
                                num(m.odds_ratio[a] - 1.0),
                                conv.clone(),
                            ]);
                        }
                        for (w, b) in &m.baseline {
                            model.push(vec![
                                "discrete".into(),
                                format!("baseline_week_{w}"),
                                num(*b),
                                num(b.exp()),
                                "NA".into(),
                                "NA".into(),
                                String::new(),
                                "NA".into(),
                                conv.clone(),
                            ]);
                        }
                    }
                },
            }
        }
    }
    let mut note_table = Table::new("survival_notes.tsv", &["note"]);
    for n in notes {
        note_table.push(vec![n]);
    }
    Ok(vec![records, model, note_table])
}

pub fn sna_tables(c: &Corpus, cfg: &PipelineConfig) -> Result<Vec<Table>> {
    let focus = c.focus_rows(cfg)?;
    let mc = metric_clustering(c, cfg)?;
    let labels: Vec<String> = focus.iter().map(|i| c.rows[*i].student_id.clone()).collect();
    let partition: Vec<usize> = focus.iter().map(|i| mc.assignments[*i]).collect();
    let y = sna::comembership_network(&partition).with_labels(labels.clone())?;
    let eng: Vec<Level> = focus.iter().map(|i| c.engagement_level[*i]).collect();
    let vpp: Vec<Option<usize>> = focus.iter().map(|i| c.vpp_category[*i]).collect();
    let sign: Vec<Processing> = focus.iter().map(|i| interpret(c.ipi[*i])).collect();
    let xs = vec![
        ("engagement_match", sna::exact_match_matrix(&eng).with_labels(labels.clone())?),
        ("vpp_match", sna::exact_match_matrix(&vpp).with_labels(labels.clone())?),
        ("ipi_sign_match", sna::exact_match_matrix(&sign).with_labels(labels)?),
    ];
    let mut networks: Vec<(String, Adjacency)> = vec![("cluster_comembership".into(), y.clone())];
    for (name, x) in &xs {
        networks.push((name.to_string(), x.clone()));
    }
    for (name, x) in &xs {
        networks.push((format!("cluster_and_{name}"), sna::multiplex_and(&y, x)?));
    }

    let mut density = Table::new("sna_density.tsv", &["network", "group", "nodes", "ties", "density"]);
    let mut ei = Table::new("sna_ei.tsv", &["network", "ei_index", "note"]);
    for (name, a) in &networks {
        density.push(vec![
            name.clone(),
            "all".into(),
            a.n().to_string(),
            a.edge_count().to_string(),
            soft(sna::density(a))?.map_or("NA".into(), num),
        ]);
        if let Ok(groups) = soft(sna::density_by_group(a, &partition))? {
            for g in &groups.groups {
                density.push(vec![
                    name.clone(),
                    g.group.to_string(),
                    g.nodes.to_string(),
                    g.internal_ties.to_string(),
                    opt(g.density),
                ]);
            }
        }
        match soft(sna::ei_index(a, &partition))? {
            Ok(v) => ei.push(vec![name.clone(), num(v), String::new()]),
            Err(e) => ei.push(vec![name.clone(), "NA".into(), e]),
        }
    }

    let perms = cfg.sna.permutations;
    let mut qap = Table::new(
        "sna_qap.tsv",
        &["analysis", "term", "estimate", "p", "permutations", "seed", "note"],
    );
    let mut qap_row = |analysis: &str, term: &str, est: f64, p: f64, note: String| {
        qap.push(vec![
            analysis.into(),
            term.into(),
            num(est),
            num(p),
            perms.to_string(),
            cfg.seed.to_string(),
            note,
        ]);
    };
    for (name, x) in &xs {
        match soft(sna::qap_correlation(&y, x, perms, cfg.seed))? {
            Ok(r) => qap_row("correlation", name, r.observed, r.p, String::new()),
            Err(e) => qap_row("correlation", name, f64::NAN, f64::NAN, e),
        }
    }
    let mats: Vec<Adjacency> = xs.iter().map(|(_, x)| x.clone()).collect();
    match soft(sna::qap_regression(&y, &mats, perms, cfg.seed))? {
        Ok(r) => {
            qap_row("regression", "intercept", r.intercept, f64::NAN, String::new());
            for ((name, _), (b, p)) in xs.iter().zip(r.coefficients.iter().zip(&r.p_values)) {
                qap_row("regression", name, *b, *p, String::new());
            }
            qap_row("regression", "r_squared", r.r_squared, f64::NAN, String::new());
        }
        Err(e) => qap_row("regression", "all", f64::NAN, f64::NAN, e),
    }
    Ok(vec![density, ei, qap])
}

fn student_mean_ipi(c: &Corpus) -> Vec<f64> {
    c.student_rows
        .iter()
        .map(|idx| idx.iter().map(|i| c.ipi[*i] as f64).sum::<f64>() / idx.len() as f64)
        .collect()
}

fn record_row(r: &TestRecord, note: &str) -> Vec<String> {
    vec![
        r.test.clone(),
        num(r.statistic),
        r.df.clone(),
        num(r.p),
        u8::from(r.significant_05).to_string(),
        u8::from(r.significant_01).to_string(),
        note.to_string(),
    ]
}

pub fn stats_tables(c: &Corpus, cfg: &PipelineConfig) -> Result<Vec<Table>> {
    let km = markov_clustering(c, cfg)?;
    let ipi = student_mean_ipi(c);
    let k = cfg.cluster.k_markov;
    let groups: Vec<Vec<f64>> = (0..k)
        .map(|g| (0..ipi.len()).filter(|s| km.assignments[*s] == g).map(|s| ipi[s]).collect())
        .collect();
    let mut tests = Table::new(
        "stats_tests.tsv",
        &["test", "statistic", "df", "p", "significant_05", "significant_01", "note"],
    );
    let mut tukey = Table::new("stats_tukey.tsv", &["group_i", "group_j", "mean_diff", "critical", "significant"]);
    let mut residuals = Table::new("stats_residuals.tsv", &["cluster", "outcome", "observed", "expected", "residual"]);
    let failed = |name: &str, e: String| record_row(&TestRecord::new(name, f64::NAN, String::new(), f64::NAN), &e);

    match soft(stats::one_way_anova(&groups))? {
        Ok(a) => {
            let rec = TestRecord::new(
                "anova_ipi_by_markov_cluster",
                a.f.unwrap_or(f64::NAN),
                format!("{},{}", a.df_between, a.df_within),
                a.p.unwrap_or(f64::NAN),
            );
            tests.push(record_row(&rec, if a.f.is_none() { "0/0" } else { "" }));
            if let Ok(pairs) = soft(stats::tukey_hsd(&groups, 0.05))? {
                for p in pairs {
                    tukey.push(vec![
                        p.i.to_string(),
                        p.j.to_string(),
                        num(p.mean_diff),
                        num(p.critical),
                        u8::from(p.significant).to_string(),
                    ]);
                }
            }
        }
        Err(e) => tests.push(failed("anova_ipi_by_markov_cluster", e)),
    }

    let mut counts = vec![vec![0u64; 2]; k];
    for (s, st) in c.status.iter().enumerate() {
        counts[km.assignments[s]][usize::from(st.event)] += 1;
    }
    let outcomes = ["completed", "dropped"];
    let table = ContingencyTable::new(counts.clone())?.with_labels(
        (0..k).map(|g| g.to_string()).collect(),
        outcomes.iter().map(|s| s.to_string()).collect(),
    )?;
    match soft(stats::chi_square(&table))? {
        Ok(x) => {
            let rec = TestRecord::new("chi_square_cluster_by_dropout", x.statistic, x.df.to_string(), x.p);
            tests.push(record_row(&rec, ""));
            for (g, row) in counts.iter().enumerate() {
                for (o, obs) in row.iter().enumerate() {
                    residuals.push(vec![
                        g.to_string(),
                        outcomes[o].into(),
                        obs.to_string(),
                        num(x.expected[g][o]),
                        num(x.residuals[g][o]),
                    ]);
                }
            }
        }
        Err(e) => tests.push(failed("chi_square_cluster_by_dropout", e)),
    }

    let (drop, kept): (Vec<usize>, Vec<usize>) = (0..ipi.len()).partition(|s| c.status[*s].event);
    let pick = |idx: &[usize]| idx.iter().map(|s| ipi[*s]).collect::<Vec<f64>>();
    let (a, b) = (pick(&drop), pick(&kept));
    let z = if a.is_empty() || b.is_empty() {
        Err("one of the groups is empty".to_string())
    } else {
        soft(stats::two_sample_z(stats::mean(&a), stats::mean(&b), stats::sample_sd(&ipi), a.len(), b.len()))?
            .map_err(|e| e.to_string())
    };
    match z {
        Ok(z) => tests.push(record_row(
            &TestRecord::new("z_ipi_dropped_vs_completed", z.z_abs, String::new(), z.p_two_sided),
            "",
        )),
        Err(e) => tests.push(failed("z_ipi_dropped_vs_completed", e)),
    }
    Ok(vec![tests, tukey, residuals])
}

/// IPI distribution within each level of several partitions of the
/// student-video rows.
pub fn ipi_partition_table(c: &Corpus, cfg: &PipelineConfig) -> Result<Table> {
    let km = markov_clustering(c, cfg)?;
    let mc = metric_clustering(c, cfg)?;
    let mut t = Table::new(
        "ipi_partitions.tsv",
        &["partition", "level", "sequences", "mean_ipi", "sd_ipi", "min_ipi", "max_ipi"],
    );
    let partitions: Vec<(&str, Box<dyn Fn(usize) -> String + '_>)> = vec![
        ("engagement", Box::new(|i| level_symbol(c.engagement_level[i]).to_string())),
        ("vpp_category", Box::new(|i| c.vpp_symbol(i))),
        ("markov_cluster", Box::new(|i| km.assignments[c.row_student[i]].to_string())),
        ("metric_cluster", Box::new(|i| mc.assignments[i].to_string())),
        (
            "course_outcome",
            Box::new(|i| if c.status[c.row_student[i]].event { "dropped" } else { "completed" }.to_string()),
        ),
        ("week", Box::new(|i| c.week[i].to_string())),
    ];
    for (name, key) in &partitions {
        let mut levels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for i in 0..c.rows.len() {
            levels.entry(key(i)).or_default().push(c.ipi[i] as f64);
        }
        for (level, xs) in levels {
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            t.push(vec![
                name.to_string(),
                level,
                xs.len().to_string(),
                num(stats::mean(&xs)),
                num(if xs.len() > 1 { stats::sample_sd(&xs) } else { f64::NAN }),
                num(lo),
                num(hi),
            ]);
        }
    }
    Ok(t)
}

/// Every stage plus the IPI partition summaries.
pub fn report_tables(c: &Corpus, cfg: &PipelineConfig) -> Result<Vec<Table>> {
    let mut out = encode_tables(c);
    out.extend(actions_tables(c));
    out.extend(ipi_tables(c));
    out.extend(cluster_tables(c, cfg)?);
    out.extend(predict_tables(c, cfg)?);
    out.extend(survival_tables(c, cfg)?);
    out.extend(sna_tables(c, cfg)?);
    out.extend(stats_tables(c, cfg)?);
    out.push(ipi_partition_table(c, cfg)?);
    let mut notes = Table::new("diagnostics.tsv", &["message"]);
    for d in &c.diagnostics {
        notes.push(vec![d.clone()]);
    }
    out.push(notes);
    Ok(out)
}

/// Writes a synthetic cohort: the event log plus ground-truth tables, each
/// headed by the hash of the cohort specification.
pub fn write_cohort(dir: &Path, cohort: &Cohort) -> Result<String> {
    let hash = sha256_hex(&cohort.spec.to_toml());
    std::fs::create_dir_all(dir)?;
    let header = |name: &str| -> Result<BufWriter<File>> {
        let mut f = BufWriter::new(File::create(dir.join(name))?);
        writeln!(f, "# config_sha256={hash}")?;
        Ok(f)
    };
    let mut log = header("events.jsonl")?;
    cohort.write_log(&mut log)?;
    log.flush()?;
    cohort.write_students_table(header("students.tsv")?)?;
    cohort.write_sequences_table(header("sequences.tsv")?)?;
    cohort.write_kernels_table(header("kernels.tsv")?)?;
    std::fs::write(dir.join("cohort.toml"), cohort.spec.to_toml())?;
    Ok(hash)
}
