use proptest::prelude::*;

use clickstream::actions::{summarize_actions, Category, Level};
use clickstream::cluster::{adjusted_rand_index, kmeans, KMeansConfig};
use clickstream::ingest::{collapse_scrolls, ClickOp, TimedToken};
use clickstream::learn::{fold_sizes, grouped_kfold};
use clickstream::markov::{fit_markov, Smoothing};
use clickstream::sna::{qap_correlation, Adjacency};
use clickstream::stats::{discretize, BinMode};
use clickstream::strdist::{
    fuzzy_pattern_weight, levenshtein_table, qgram_cosine_distance, weighted_levenshtein, EditWeights,
};
use clickstream::survival::{fit_cox, CoxConfig, Covariate, CovariateKind, SurvivalData, SurvivalRecord};

fn op() -> impl Strategy<Value = ClickOp> {
    (0..ClickOp::COUNT).prop_map(|i| ClickOp::from_index(i).unwrap())
}

fn ops(max: usize) -> impl Strategy<Value = Vec<ClickOp>> {
    prop::collection::vec(op(), 0..max)
}

proptest! {
    #[test]
    fn cosine_distance_is_a_bounded_symmetric_dissimilarity(s in ops(30), t in ops(30)) {
        let d = qgram_cosine_distance(&s, &t, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - qgram_cosine_distance(&t, &s, 4).unwrap()).abs() < 1e-12);
        prop_assert!(qgram_cosine_distance(&s, &s, 4).unwrap() < 1e-12);
    }

    #[test]
    fn unit_levenshtein_is_a_metric(a in ops(12), b in ops(12), c in ops(12)) {
        let d = |x: &[ClickOp], y: &[ClickOp]| weighted_levenshtein(x, y, EditWeights::UNIT).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert!(d(&a, &b) <= a.len().max(b.len()) as f64);
    }

    #[test]
    fn rolling_rows_match_the_full_table(a in ops(10), b in ops(15), del in 0.0..2.0f64) {
        let w = EditWeights::new(del, 1.0, 1.0);
        let table = levenshtein_table(&a, &b, w);
        prop_assert!((table[a.len()][b.len()] - weighted_levenshtein(&a, &b, w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pattern_weight_never_exceeds_one(p in prop::collection::vec(op(), 4), s in ops(40)) {
        prop_assert!(fuzzy_pattern_weight(&p, &s).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn scroll_collapse_is_idempotent(
        raw in prop::collection::vec((op(), 0.0..3.0f64), 0..40),
        window in 0.1..2.0f64,
    ) {
        let mut t = 0.0;
        let tokens: Vec<TimedToken> = raw
            .iter()
            .map(|(op, gap)| {
                t += gap;
                TimedToken { op: *op, time: t, rate: 1.0 }
            })
            .collect();
        let once = collapse_scrolls(&tokens, window);
        prop_assert!(once.len() <= tokens.len());
        prop_assert_eq!(collapse_scrolls(&once, window), once.clone());
        // a scroll token appears only where a seek run was collapsed
        let had_scrolls = tokens.iter().filter(|x| matches!(x.op, ClickOp::SSf | ClickOp::SSb)).count();
        let has_scrolls = once.iter().filter(|x| matches!(x.op, ClickOp::SSf | ClickOp::SSb)).count();
        prop_assert!(has_scrolls >= had_scrolls);
    }

    #[test]
    fn markov_rows_are_stochastic(seqs in prop::collection::vec(ops(30), 1..6), order in 1usize..=2) {
        let n: usize = seqs.iter().map(|s| s.len().saturating_sub(order)).sum();
        prop_assume!(n > 0);
        for smoothing in [Smoothing::UniformUnseen, Smoothing::AddOne] {
            let (m, r) = fit_markov(&seqs, order, smoothing).unwrap();
            for state in 0..m.n_states() {
                let sum: f64 = m.row(state).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
            prop_assert_eq!(r.n, n);
            prop_assert!((r.aic - (-2.0 * r.log_likelihood + 2.0 * r.p as f64)).abs() < 1e-9 * r.aic.abs().max(1.0));
        }
    }

    #[test]
    fn median_split_puts_half_or_more_high(rows in prop::collection::vec(prop::array::uniform7(-5.0..5.0f64), 2..30)) {
        let v = summarize_actions(&rows).unwrap();
        for c in Category::ALL {
            let high = v.iter().filter(|b| b.level(c) == Level::High).count();
            prop_assert!(2 * high >= rows.len());
        }
    }

    #[test]
    fn grouped_folds_keep_groups_together(
        groups in prop::collection::vec(0u8..15, 10..80),
        k in 2usize..5,
        seed in any::<u64>(),
    ) {
        let ids: Vec<String> = groups.iter().map(|g| format!("s{g}")).collect();
        let distinct = { let mut d = groups.clone(); d.sort(); d.dedup(); d.len() };
        prop_assume!(k <= distinct);
        let folds = grouped_kfold(&ids, k, seed).unwrap();
        prop_assert_eq!(&folds, &grouped_kfold(&ids, k, seed).unwrap());
        for (i, a) in ids.iter().enumerate() {
            for (j, b) in ids.iter().enumerate() {
                if a == b {
                    prop_assert_eq!(folds[i], folds[j]);
                }
            }
        }
        let sizes = fold_sizes(&ids, &folds, k);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn kmeans_wcss_never_increases(
        points in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 4..40),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let res = kmeans(&points, &KMeansConfig::new(k, seed)).unwrap();
        prop_assert!(res.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        prop_assert!(res.assignments.iter().all(|a| *a < k));
    }

    #[test]
    fn ari_ignores_label_names(labels in prop::collection::vec(0usize..4, 3..40), shift in 1usize..4) {
        let renamed: Vec<usize> = labels.iter().map(|l| (l + shift) % 4).collect();
        let distinct = { let mut d = labels.clone(); d.sort(); d.dedup(); d.len() };
        prop_assume!(distinct > 1);
        prop_assert!((adjusted_rand_index(&labels, &renamed).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_frequency_bins_are_balanced(
        raw in prop::collection::btree_set(-1000i32..1000, 4..80),
        bins in 2usize..5,
    ) {
        let values: Vec<f64> = raw.iter().map(|v| f64::from(*v)).collect();
        let d = discretize(&values, BinMode::EqualFrequency, bins).unwrap();
        let c = d.counts(bins);
        prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
    }

    #[test]
    fn qap_statistic_survives_joint_relabeling(
        edges in prop::collection::vec((0usize..12, 0usize..12, any::<bool>(), any::<bool>()), 20..60),
        perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let (mut a, mut b) = (Adjacency::empty(12), Adjacency::empty(12));
        for (i, j, x, y) in edges {
            if i != j {
                a.set(i, j, x);
                b.set(i, j, y);
            }
        }
        let Ok(r) = qap_correlation(&a, &b, 1, 0) else { return Ok(()) };
        let rp = qap_correlation(&a.permuted(&perm), &b.permuted(&perm), 1, 0).unwrap();
        prop_assert!((r.observed - rp.observed).abs() < 1e-12);
    }
}

fn cox_data(rows: &[(f64, bool, f64)]) -> SurvivalData {
    SurvivalData {
        schema: vec![Covariate::new("x", CovariateKind::Numeric)],
        records: rows
            .iter()
            .enumerate()
            .map(|(i, (d, e, x))| SurvivalRecord {
                student_id: format!("r{i:03}"),
                duration: *d,
                event: *e,
                covariates: vec![*x],
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cox_fit_ignores_record_order_and_rescales(
        rows in prop::collection::vec((1u8..8, prop::bool::weighted(0.7), -2.0..2.0f64), 20..40),
        scale in 0.5..4.0f64,
    ) {
        let rows: Vec<(f64, bool, f64)> = rows.iter().map(|(d, e, x)| (f64::from(*d), *e, *x)).collect();
        let base = match fit_cox(&cox_data(&rows), &CoxConfig::default()) {
            Ok(m) if m.converged && m.beta[0].abs() < 5.0 => m,
            _ => return Ok(()),
        };
        // identities travel with the records, so reversing only changes input order
        let mut data = cox_data(&rows);
        data.records.reverse();
        let m2 = fit_cox(&data, &CoxConfig::default()).unwrap();
        prop_assert!((m2.beta[0] - base.beta[0]).abs() < 1e-6);

        let scaled: Vec<(f64, bool, f64)> = rows.iter().map(|(d, e, x)| (*d, *e, x * scale)).collect();
        let m3 = fit_cox(&cox_data(&scaled), &CoxConfig::default()).unwrap();
        prop_assert!((m3.beta[0] * scale - base.beta[0]).abs() < 1e-5 * base.beta[0].abs().max(1.0));
    }
}
