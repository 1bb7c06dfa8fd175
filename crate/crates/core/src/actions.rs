//! Level-2 summarization: n-gram mining, the seven behavioral categories and
//! their corpus-level High/Low dichotomization.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ingest::{join_tokens, parse_concatenated, parse_tokens, ClickOp};
use crate::stats::quantile;
use crate::strdist::{fuzzy_pattern_weight, PATTERN_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Rewatch,
    Skipping,
    FastWatching,
    SlowWatching,
    ClearConcept,
    CheckbackReference,
    PlayrateTransition,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Rewatch,
        Category::Skipping,
        Category::FastWatching,
        Category::SlowWatching,
        Category::ClearConcept,
        Category::CheckbackReference,
        Category::PlayrateTransition,
    ];

    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Rewatch => "Rewatch",
            Category::Skipping => "Skipping",
            Category::FastWatching => "FastWatching",
            Category::SlowWatching => "SlowWatching",
            Category::ClearConcept => "ClearConcept",
            Category::CheckbackReference => "CheckbackReference",
            Category::PlayrateTransition => "PlayrateTransition",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown behavioral category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn flip(self) -> Level {
        match self {
            Level::Low => Level::High,
            Level::High => Level::Low,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Low => "Low",
            Level::High => "High",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const DEFAULT_GROUPS: [(Category, &[&str]); 7] = [
    (
        Category::Rewatch,
        &["PlPaSbPl", "PlSbPaPl", "PaSbPlSb", "SbSbPaPl", "SbPaPlPa", "PaPlSbPa"],
    ),
    (
        Category::Skipping,
        &[
            "SfSfSfSf", "PaPlSfSf", "PlSfSfSf", "SfSfSfPa", "SfSfPaPl", "SfSfSfSSf", "SfSfSSfSf",
            "SfPaPlPa", "PlPaPlSf",
        ],
    ),
    (
        Category::FastWatching,
        &["PaPlRfRf", "RfPaPlPa", "RfRfPaPl", "RsPaPlRf", "PlPaPlRf"],
    ),
    (
        Category::SlowWatching,
        &["RsRsPaPl", "RsPaPlPa", "PaPlRsRs", "PlPaPlRs", "PaPlRsPa", "PlRsPaPl"],
    ),
    (
        Category::ClearConcept,
        &["PaSbPlSSb", "SSbSbPaPl", "PaPlSSbSb", "PlSSbSbPa"],
    ),
    (
        Category::CheckbackReference,
        &["SbSbSbSb", "PlSbSbSb", "SbSbSbPa", "SbSbSbSf", "SfSbSbSb", "SbPlSbSb", "SSbSbSbSb"],
    ),
    (
        Category::PlayrateTransition,
        &["RfRfRsRs", "RfRfRfRs", "RfRsRsRs", "RsRsRsRf", "RsRsRfRf", "RfRfRfRf"],
    ),
];

/// The click groups that make up each behavioral category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehavioralCatalog {
    groups: [Vec<Vec<ClickOp>>; Category::COUNT],
}

impl Default for BehavioralCatalog {
    /// The built-in catalog of 4-token click groups.
    fn default() -> Self {
        let mut groups: [Vec<Vec<ClickOp>>; Category::COUNT] = Default::default();
        for (cat, pats) in DEFAULT_GROUPS {
            groups[cat.index()] = pats
                .iter()
                .map(|p| parse_concatenated(p).expect("built-in pattern"))
                .collect();
        }
        Self { groups }
    }
}

impl BehavioralCatalog {
    pub fn new(groups: [Vec<Vec<ClickOp>>; Category::COUNT]) -> Result<Self> {
        for (cat, gs) in Category::ALL.iter().zip(&groups) {
            if gs.is_empty() {
                return domain(format!("category {cat} has no click groups"));
            }
            if let Some(bad) = gs.iter().find(|g| g.len() != PATTERN_LEN) {
                return domain(format!(
                    "click group {} of {cat} does not have {PATTERN_LEN} tokens",
                    join_tokens(bad)
                ));
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self, category: Category) -> &[Vec<ClickOp>] {
        &self.groups[category.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, &[Vec<ClickOp>])> {
        Category::ALL.iter().map(move |c| (*c, self.groups(*c)))
    }

    /// Parses the stanza format:
    ///
    /// ```text
    /// [Rewatch]
    /// Pl,Pa,Sb,Pl
    /// Pl,Sb,Pa,Pl
    /// ```
    ///
    /// Blank lines and `#` comments are ignored. All seven categories must
    /// appear exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut groups: [Vec<Vec<ClickOp>>; Category::COUNT] = Default::default();
        let mut seen = [false; Category::COUNT];
        let mut current: Option<Category> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Schema { line: i + 1, message };
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let cat: Category = name.trim().parse().map_err(|e: Error| err(e.to_string()))?;
                if seen[cat.index()] {
                    return Err(err(format!("category {cat} listed twice")));
                }
                seen[cat.index()] = true;
                current = Some(cat);
                continue;
            }
            let cat = current.ok_or_else(|| err("click group before any [Category] header".into()))?;
            let toks = parse_tokens(line).map_err(|e| err(e.to_string()))?;
            groups[cat.index()].push(toks);
        }
        if let Some(missing) = Category::ALL.iter().find(|c| !seen[c.index()]) {
            return Err(Error::Config(format!("catalog is missing category {missing}")));
        }
        Self::new(groups)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (cat, gs) in self.iter() {
            out.push_str(&format!("[{cat}]\n"));
            for g in gs {
                out.push_str(&join_tokens(g));
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

/// Most frequent contiguous n-token windows across a corpus.
///
/// Windows made only of `Pl`/`Pa` are excluded. Ties are broken by comparing
/// token names lexicographically.
pub fn mine_top_ngrams<S: AsRef<[ClickOp]>>(corpus: &[S], n: usize, k: usize) -> Result<Vec<(Vec<ClickOp>, usize)>> {
    if n == 0 || k == 0 {
        return domain("n and k must be at least 1");
    }
    let mut counts: HashMap<&[ClickOp], usize> = HashMap::new();
    for seq in corpus {
        let seq = seq.as_ref();
        if seq.len() < n {
            continue;
        }
        for w in seq.windows(n) {
            if w.iter().all(|op| op.is_play_or_pause()) {
                continue;
            }
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(Vec<ClickOp>, usize)> = counts.into_iter().map(|(g, c)| (g.to_vec(), c)).collect();
    ranked.sort_by(|(ga, ca), (gb, cb)| {
        cb.cmp(ca).then_with(|| {
            let na = ga.iter().map(|o| o.as_str());
            let nb = gb.iter().map(|o| o.as_str());
            na.cmp(nb)
        })
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// Sum of the fuzzy weights of every click group in `category`.
pub fn category_raw_weight(tokens: &[ClickOp], category: Category, catalog: &BehavioralCatalog) -> Result<f64> {
    catalog
        .groups(category)
        .iter()
        .map(|g| fuzzy_pattern_weight(g, tokens))
        .sum()
}

/// Raw weights for all seven categories, in [`Category::ALL`] order.
pub fn action_weights(tokens: &[ClickOp], catalog: &BehavioralCatalog) -> Result<[f64; Category::COUNT]> {
    let mut out = [0.0; Category::COUNT];
    for c in Category::ALL {
        out[c.index()] = category_raw_weight(tokens, c, catalog)?;
    }
    Ok(out)
}

/// [`action_weights`] for every sequence of a corpus, computed in parallel.
pub fn corpus_weights<S: AsRef<[ClickOp]> + Sync>(
    corpus: &[S],
    catalog: &BehavioralCatalog,
) -> Result<Vec<[f64; Category::COUNT]>> {
    crate::exec::map(corpus, |s| action_weights(s.as_ref(), catalog))
        .into_iter()
        .collect()
}

/// Summarized clickstream vector of one row.
#[derive(Debug, Clone, PartialEq)]
pub struct BehavioralActionVector {
    pub raw: [f64; Category::COUNT],
    pub levels: [Level; Category::COUNT],
}

impl BehavioralActionVector {
    pub fn level(&self, c: Category) -> Level {
        self.levels[c.index()]
    }

    pub fn flipped(&self) -> Self {
        Self {
            raw: self.raw,
            levels: self.levels.map(Level::flip),
        }
    }

    /// Vector with the given levels and zero raw weights.
    pub fn from_levels(levels: [Level; Category::COUNT]) -> Self {
        Self {
            raw: [0.0; Category::COUNT],
            levels,
        }
    }
}

/// Dichotomizes each category at its corpus median: values at or above the
/// median are High.
pub fn summarize_actions(weights: &[[f64; Category::COUNT]]) -> Result<Vec<BehavioralActionVector>> {
    if weights.len() < 2 {
        return domain("median split needs at least two rows");
    }
    let mut medians = [0.0; Category::COUNT];
    for c in 0..Category::COUNT {
        let mut col: Vec<f64> = weights.iter().map(|w| w[c]).collect();
        if col.iter().any(|x| !x.is_finite()) {
            return domain("category weights must be finite");
        }
        col.sort_by(f64::total_cmp);
        medians[c] = quantile(&col, 0.5);
    }
    Ok(weights
        .iter()
        .map(|w| BehavioralActionVector {
            raw: *w,
            levels: std::array::from_fn(|c| if w[c] >= medians[c] { Level::High } else { Level::Low }),
        })
        .collect())
}
