//! Sparse, namespaced row features.

use std::collections::BTreeMap;

use crate::actions::{BehavioralActionVector, BehavioralCatalog, Category, Level};
use crate::ingest::{join_tokens, ClickOp, Vwss};
use crate::strdist::contains_contiguous;

/// One training row. Feature names carry their extractor as a prefix
/// (`ngram:`, `prop:`, `len:`, `action:`, `traj:`, `eng:`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub features: BTreeMap<String, f64>,
    pub label: usize,
    pub group_id: String,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> f64 {
        self.features.get(name).copied().unwrap_or(0.0)
    }

    /// Adds `other`'s features, overwriting on name collisions.
    pub fn extend(&mut self, other: impl IntoIterator<Item = (String, f64)>) {
        self.features.extend(other);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub ngram_sizes: Vec<usize>,
    pub length: bool,
    pub proportions: bool,
    pub engagement: bool,
    /// Dichotomized behavioral action levels.
    pub actions: bool,
    /// Presence flag per category: any of its catalog groups occurs
    /// contiguously in the sequence.
    pub patterns: bool,
    /// Use only the first `i` tokens.
    pub prefix: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            ngram_sizes: vec![4, 5],
            length: true,
            proportions: true,
            engagement: true,
            actions: true,
            patterns: true,
            prefix: None,
        }
    }
}

/// Per-row inputs that do not come from the token sequence itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct RowContext<'a> {
    pub actions: Option<&'a BehavioralActionVector>,
    pub engagement: Option<Level>,
    pub catalog: Option<&'a BehavioralCatalog>,
}

fn level_value(l: Level) -> f64 {
    match l {
        Level::High => 1.0,
        Level::Low => 0.0,
    }
}

pub fn token_features(tokens: &[ClickOp], ctx: &RowContext, cfg: &FeatureConfig) -> BTreeMap<String, f64> {
    let tokens = match cfg.prefix {
        Some(i) => &tokens[..i.min(tokens.len())],
        None => tokens,
    };
    let mut f = BTreeMap::new();
    for &n in &cfg.ngram_sizes {
        if n == 0 {
            continue;
        }
        for w in tokens.windows(n) {
            *f.entry(format!("ngram:{}", join_tokens(w))).or_insert(0.0) += 1.0;
        }
    }
    if cfg.length {
        f.insert("len:tokens".into(), tokens.len() as f64);
    }
    if cfg.proportions {
        let mut counts = [0usize; ClickOp::COUNT];
        for t in tokens {
            counts[t.index()] += 1;
        }
        for op in ClickOp::ALL {
            let p = if tokens.is_empty() {
                0.0
            } else {
                counts[op.index()] as f64 / tokens.len() as f64
            };
            f.insert(format!("prop:{op}"), p);
        }
    }
    if cfg.engagement {
        if let Some(l) = ctx.engagement {
            f.insert("eng:high".into(), level_value(l));
        }
    }
    if cfg.actions {
        if let Some(bav) = ctx.actions {
            for c in Category::ALL {
                f.insert(format!("action:{c}"), level_value(bav.level(c)));
            }
        }
    }
    if cfg.patterns {
        if let Some(cat) = ctx.catalog {
            for (c, groups) in cat.iter() {
                let hit = groups.iter().any(|g| contains_contiguous(tokens, g));
                f.insert(format!("action:has:{c}"), f64::from(u8::from(hit)));
            }
        }
    }
    f
}

/// Features of one encoded sequence; the group id is the student.
pub fn extract_features(v: &Vwss, ctx: &RowContext, cfg: &FeatureConfig) -> FeatureVector {
    FeatureVector {
        features: token_features(&v.tokens, ctx, cfg),
        label: 0,
        group_id: v.student_id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClickOp::*;

    fn fv(tokens: Vec<ClickOp>) -> FeatureVector {
        let v = Vwss {
            student_id: "s".into(),
            tokens,
            ..Default::default()
        };
        extract_features(&v, &RowContext::default(), &FeatureConfig::default())
    }

    #[test]
    fn proportions_and_length() {
        let f = fv(vec![Pl, Pa, Pl, Pa]);
        assert_eq!(f.get("prop:Pl"), 0.5);
        assert_eq!(f.get("prop:Pa"), 0.5);
        assert_eq!(f.get("len:tokens"), 4.0);
        assert_eq!(f.get("ngram:Pl,Pa,Pl,Pa"), 1.0);
        assert_eq!(f.group_id, "s");
    }

    #[test]
    fn repeated_ngram() {
        let f = fv(vec![Sf; 5]);
        assert_eq!(f.get("ngram:Sf,Sf,Sf,Sf"), 2.0);
        assert_eq!(f.get("ngram:Sf,Sf,Sf,Sf,Sf"), 1.0);
    }

    #[test]
    fn empty_sequence() {
        let f = fv(vec![]);
        assert_eq!(f.get("len:tokens"), 0.0);
        assert!(ClickOp::ALL.iter().all(|op| f.get(&format!("prop:{op}")) == 0.0));
        assert!(!f.features.keys().any(|k| k.starts_with("ngram:")));
    }

    #[test]
    fn prefix_and_context() {
        let cat = BehavioralCatalog::default();
        let bav = BehavioralActionVector::from_levels([Level::High; 7]);
        let ctx = RowContext {
            actions: Some(&bav),
            engagement: Some(Level::Low),
            catalog: Some(&cat),
        };
        let cfg = FeatureConfig {
            prefix: Some(2),
            ..Default::default()
        };
        let f = token_features(&[Pl, Pa, Sf, Sf, Sf], &ctx, &cfg);
        assert_eq!(f["len:tokens"], 2.0);
        assert_eq!(f["eng:high"], 0.0);
        assert_eq!(f["action:Rewatch"], 1.0);
        assert!(f.contains_key("action:has:Skipping"));
    }
}
