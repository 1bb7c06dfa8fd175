//! Token-sequence distances and the fuzzy pattern weight.
//!
//! Everything here works on token slices, never on flattened strings, so a
//! multi-character symbol like `SSf` cannot alias `S` + `Sf`.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{domain, Result};

/// Occurrence counts of every contiguous q-token window of a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QgramProfile<T: Eq + Hash> {
    pub q: usize,
    pub counts: HashMap<Vec<T>, usize>,
}

impl<T: Eq + Hash + Clone> QgramProfile<T> {
    pub fn new(tokens: &[T], q: usize) -> Result<Self> {
        if q == 0 {
            return domain("q-gram length must be at least 1");
        }
        let mut counts = HashMap::new();
        if tokens.len() >= q {
            for w in tokens.windows(q) {
                *counts.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
        Ok(Self { q, counts })
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        // integer accumulation keeps the result independent of hash order
        small
            .counts
            .iter()
            .filter_map(|(k, a)| large.counts.get(k).map(|b| *a * *b))
            .sum::<usize>() as f64
    }

    pub fn norm(&self) -> f64 {
        (self.counts.values().map(|c| *c * *c).sum::<usize>() as f64).sqrt()
    }
}

/// Cosine distance between the q-gram count vectors of `s` and `t`.
///
/// When either sequence is shorter than `q` its profile is empty; the
/// distance is then 0 for token-identical inputs and 1 otherwise.
pub fn qgram_cosine_distance<T: Eq + Hash + Clone>(s: &[T], t: &[T], q: usize) -> Result<f64> {
    let ps = QgramProfile::new(s, q)?;
    let pt = QgramProfile::new(t, q)?;
    if ps.is_empty() || pt.is_empty() {
        return Ok(if s == t { 0.0 } else { 1.0 });
    }
    let sim = ps.dot(&pt) / (ps.norm() * pt.norm());
    Ok((1.0 - sim).clamp(0.0, 1.0))
}

/// Penalties for turning `t` into `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditWeights {
    /// Deleting a token of `t`.
    pub w_del: f64,
    /// Inserting a token of `s`.
    pub w_ins: f64,
    pub w_sub: f64,
}

impl EditWeights {
    pub const UNIT: EditWeights = EditWeights::new(1.0, 1.0, 1.0);
    /// No-match case: deletions are free.
    pub const NO_MATCH: EditWeights = EditWeights::new(0.0, 1.0, 1.0);
    /// Partial-match case: deletions are cheap.
    pub const PARTIAL_MATCH: EditWeights = EditWeights::new(0.1, 1.0, 1.0);

    pub const fn new(w_del: f64, w_ins: f64, w_sub: f64) -> Self {
        Self { w_del, w_ins, w_sub }
    }

    fn validate(&self) -> Result<()> {
        if [self.w_del, self.w_ins, self.w_sub].iter().all(|w| *w >= 0.0) {
            Ok(())
        } else {
            domain(format!("edit weights must be nonnegative: {self:?}"))
        }
    }
}

/// Full DP table for the weighted edit distance; `table[i][j]` is the cost of
/// turning `t[..j]` into `s[..i]`.
pub fn levenshtein_table<T: PartialEq>(s: &[T], t: &[T], w: EditWeights) -> Vec<Vec<f64>> {
    let (n, m) = (s.len(), t.len());
    let mut d = vec![vec![0.0; m + 1]; n + 1];
    for j in 1..=m {
        d[0][j] = d[0][j - 1] + w.w_del;
    }
    for i in 1..=n {
        d[i][0] = d[i - 1][0] + w.w_ins;
        for j in 1..=m {
            let sub = if s[i - 1] == t[j - 1] { 0.0 } else { w.w_sub };
            d[i][j] = (d[i][j - 1] + w.w_del)
                .min(d[i - 1][j] + w.w_ins)
                .min(d[i - 1][j - 1] + sub);
        }
    }
    d
}

/// Weighted Levenshtein distance for turning `t` into `s`.
pub fn weighted_levenshtein<T: PartialEq>(s: &[T], t: &[T], w: EditWeights) -> Result<f64> {
    w.validate()?;
    // Two rolling rows; same recurrence as `levenshtein_table`.
    let m = t.len();
    let mut prev: Vec<f64> = (0..=m).map(|j| j as f64 * w.w_del).collect();
    let mut cur = vec![0.0; m + 1];
    for (i, si) in s.iter().enumerate() {
        cur[0] = (i + 1) as f64 * w.w_ins;
        for j in 1..=m {
            let sub = if *si == t[j - 1] { 0.0 } else { w.w_sub };
            cur[j] = (cur[j - 1] + w.w_del)
                .min(prev[j] + w.w_ins)
                .min(prev[j - 1] + sub);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Length of the behavioral click groups scored by [`fuzzy_pattern_weight`].
pub const PATTERN_LEN: usize = 4;

/// How a pattern relates to a sequence; selects the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchCase {
    /// The pattern occurs contiguously at least once.
    Full,
    /// No token in common.
    NoMatch,
    Partial,
}

pub fn contains_contiguous<T: PartialEq>(haystack: &[T], needle: &[T]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

pub fn classify_match<T: PartialEq>(p: &[T], s: &[T]) -> MatchCase {
    if contains_contiguous(s, p) {
        MatchCase::Full
    } else if !p.iter().any(|x| s.contains(x)) {
        MatchCase::NoMatch
    } else {
        MatchCase::Partial
    }
}

/// Similarity of a 4-token click group to a full sequence.
///
/// Full matches score `1 − cosine distance` over 4-gram counts; otherwise
/// `1 − weighted Levenshtein` with free deletions when nothing is shared and
/// 0.1-cost deletions on a partial match. Long mismatching sequences score
/// strongly negative.
pub fn fuzzy_pattern_weight<T: Eq + Hash + Clone>(p: &[T], s: &[T]) -> Result<f64> {
    if p.len() != PATTERN_LEN {
        return domain(format!(
            "behavioral pattern must have {PATTERN_LEN} tokens, got {}",
            p.len()
        ));
    }
    Ok(match classify_match(p, s) {
        MatchCase::Full => 1.0 - qgram_cosine_distance(p, s, PATTERN_LEN)?,
        MatchCase::NoMatch => 1.0 - weighted_levenshtein(p, s, EditWeights::NO_MATCH)?,
        MatchCase::Partial => 1.0 - weighted_levenshtein(p, s, EditWeights::PARTIAL_MATCH)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_concatenated, ClickOp};

    fn toks(s: &str) -> Vec<ClickOp> {
        parse_concatenated(s).unwrap()
    }

    // Brute-force cosine: enumerate every 4-gram over the 8-symbol alphabet.
    fn brute_cosine(s: &[ClickOp], t: &[ClickOp], q: usize) -> f64 {
        let count = |seq: &[ClickOp], g: &[ClickOp]| {
            (0..seq.len().saturating_sub(q - 1))
                .filter(|&i| seq.len() >= q && &seq[i..i + q] == g)
                .count() as f64
        };
        let (mut dot, mut ns, mut nt) = (0.0, 0.0, 0.0);
        for code in 0..8usize.pow(q as u32) {
            let g: Vec<ClickOp> = (0..q)
                .map(|k| ClickOp::from_index((code / 8usize.pow(k as u32)) % 8).unwrap())
                .collect();
            let (a, b) = (count(s, &g), count(t, &g));
            dot += a * b;
            ns += a * a;
            nt += b * b;
        }
        1.0 - dot / (ns.sqrt() * nt.sqrt())
    }

    #[test]
    fn identical_sequences_have_zero_distance() {
        let s = toks("PlPaSfSf");
        assert_eq!(qgram_cosine_distance(&s, &s, 4).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_profiles_have_unit_distance() {
        assert_eq!(qgram_cosine_distance(&toks("SfSfSfSf"), &toks("SbSbSbSb"), 4).unwrap(), 1.0);
    }

    #[test]
    fn cosine_matches_brute_force_gram_counter() {
        let s = toks("PlPaSfPaSf");
        let t = toks("PlPaSfPaSfPlPa");
        let oracle = brute_cosine(&s, &t, 4);
        // 1 - 1/sqrt(2), frozen from the oracle above
        assert!((oracle - 0.292_893_218_813_452_5).abs() < 1e-12);
        assert!((qgram_cosine_distance(&s, &t, 4).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn short_sequences_and_bad_q() {
        assert_eq!(qgram_cosine_distance(&toks("PlPa"), &toks("PlPa"), 4).unwrap(), 0.0);
        assert_eq!(qgram_cosine_distance(&toks("PlPa"), &toks("PlPaSfSf"), 4).unwrap(), 1.0);
        assert!(qgram_cosine_distance(&toks("PlPa"), &toks("PlPa"), 0).is_err());
    }

    #[test]
    fn levenshtein_examples() {
        let s = toks("PlSfPaSf");
        assert_eq!(weighted_levenshtein(&s, &s, EditWeights::UNIT).unwrap(), 0.0);
        let t = toks("PlSfPaSfRfRs");
        let d = weighted_levenshtein(&s, &t, EditWeights::PARTIAL_MATCH).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
        assert_eq!(weighted_levenshtein(&toks("Pl"), &toks("Pa"), EditWeights::UNIT).unwrap(), 1.0);
        let empty: Vec<ClickOp> = vec![];
        assert_eq!(weighted_levenshtein(&empty, &empty, EditWeights::UNIT).unwrap(), 0.0);
        assert!(weighted_levenshtein(&s, &t, EditWeights::new(-1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn rolling_rows_agree_with_full_table() {
        let s = toks("PlSfPaSfSbRf");
        let t = toks("RfSbSbRsPlSbSfPaSfSb");
        let w = EditWeights::new(0.3, 0.7, 1.1);
        let table = levenshtein_table(&s, &t, w);
        assert_eq!(table[s.len()][t.len()], weighted_levenshtein(&s, &t, w).unwrap());
    }

    #[test]
    fn pattern_weight_dispatch() {
        let p = toks("PlSfPaSf");
        assert_eq!(fuzzy_pattern_weight(&p, &p).unwrap(), 1.0);
        let empty: Vec<ClickOp> = vec![];
        assert_eq!(fuzzy_pattern_weight(&p, &empty).unwrap(), -3.0);
        assert_eq!(classify_match(&p, &toks("RfSbSbRs")), MatchCase::NoMatch);
        assert_eq!(classify_match(&p, &toks("RfPlSbSf")), MatchCase::Partial);
        assert!(fuzzy_pattern_weight(&p[..3], &p).is_err());
    }
}
