//! Level-3 scoring: the Information Processing Index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::actions::{BehavioralActionVector, Category, Level};
use crate::error::{domain, Result};

/// Signed weight of each category when its level is High. A Low level
/// contributes the negated weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpiWeightTable {
    #[serde(rename = "Rewatch")]
    pub rewatch: i32,
    #[serde(rename = "Skipping")]
    pub skipping: i32,
    #[serde(rename = "FastWatching")]
    pub fast_watching: i32,
    #[serde(rename = "SlowWatching")]
    pub slow_watching: i32,
    #[serde(rename = "ClearConcept")]
    pub clear_concept: i32,
    #[serde(rename = "CheckbackReference")]
    pub checkback_reference: i32,
    #[serde(rename = "PlayrateTransition")]
    pub playrate_transition: i32,
}

impl Default for IpiWeightTable {
    /// Magnitudes 3, 2, 1, 0 by position in the processing hierarchy.
    fn default() -> Self {
        Self {
            clear_concept: 3,
            rewatch: 2,
            slow_watching: 1,
            playrate_transition: 0,
            fast_watching: -1,
            checkback_reference: -2,
            skipping: -3,
        }
    }
}

impl IpiWeightTable {
    pub fn weight(&self, c: Category) -> i32 {
        match c {
            Category::Rewatch => self.rewatch,
            Category::Skipping => self.skipping,
            Category::FastWatching => self.fast_watching,
            Category::SlowWatching => self.slow_watching,
            Category::ClearConcept => self.clear_concept,
            Category::CheckbackReference => self.checkback_reference,
            Category::PlayrateTransition => self.playrate_transition,
        }
    }

    /// Sign constraints: playrate transition neutral, appetitive categories
    /// positive, aversive ones negative.
    pub fn validate(&self) -> Result<()> {
        if self.playrate_transition != 0 {
            return domain("PlayrateTransition weight must be 0");
        }
        for c in [Category::Rewatch, Category::ClearConcept, Category::SlowWatching] {
            if self.weight(c) <= 0 {
                return domain(format!("{c} weight must be positive"));
            }
        }
        for c in [Category::Skipping, Category::FastWatching, Category::CheckbackReference] {
            if self.weight(c) >= 0 {
                return domain(format!("{c} weight must be negative"));
            }
        }
        Ok(())
    }

    /// Σ|weight|, the largest attainable |IPI|.
    pub fn max_abs(&self) -> i32 {
        Category::ALL.iter().map(|c| self.weight(*c).abs()).sum()
    }
}

pub fn weight_assign(category: Category, level: Level, table: &IpiWeightTable) -> i32 {
    match level {
        Level::High => table.weight(category),
        Level::Low => -table.weight(category),
    }
}

/// Name-based lookup for callers holding category names as text.
pub fn weight_assign_named(category: &str, level: Level, table: &IpiWeightTable) -> Result<i32> {
    Ok(weight_assign(category.parse()?, level, table))
}

pub fn compute_ipi(v: &BehavioralActionVector, table: &IpiWeightTable) -> i32 {
    Category::ALL
        .iter()
        .map(|c| weight_assign(*c, v.level(*c), table))
        .sum()
}

/// IPI from an explicit (category, level) list; every category must appear.
pub fn compute_ipi_from_levels(levels: &[(Category, Level)], table: &IpiWeightTable) -> Result<i32> {
    let mut found: [Option<Level>; Category::COUNT] = [None; Category::COUNT];
    for (c, l) in levels {
        found[c.index()] = Some(*l);
    }
    let mut total = 0;
    for c in Category::ALL {
        match found[c.index()] {
            Some(l) => total += weight_assign(c, l, table),
            None => return domain(format!("missing level for {c}")),
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Processing {
    High,
    Neutral,
    Low,
}

pub fn interpret(ipi: i32) -> Processing {
    match ipi.cmp(&0) {
        Ordering::Greater => Processing::High,
        Ordering::Equal => Processing::Neutral,
        Ordering::Less => Processing::Low,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Level::*;

    #[test]
    fn skipping_example() {
        let t = IpiWeightTable::default();
        assert_eq!(weight_assign(Category::Skipping, High, &t), -3);
        assert_eq!(weight_assign(Category::Skipping, Low, &t), 3);
        assert_eq!(weight_assign(Category::PlayrateTransition, High, &t), 0);
        assert!(weight_assign_named("Nope", High, &t).is_err());
    }

    #[test]
    fn default_table_is_valid() {
        let t = IpiWeightTable::default();
        t.validate().unwrap();
        assert_eq!(t.max_abs(), 12);
        let bad = IpiWeightTable { playrate_transition: 1, ..t };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn all_high_sums_to_zero() {
        let v = BehavioralActionVector::from_levels([High; 7]);
        assert_eq!(compute_ipi(&v, &IpiWeightTable::default()), 0);
    }

    #[test]
    fn maximum_profile() {
        // Rewatch, Skipping, Fast, Slow, Clear, Checkback, Playrate
        let v = BehavioralActionVector::from_levels([High, Low, Low, High, High, Low, High]);
        let t = IpiWeightTable::default();
        assert_eq!(compute_ipi(&v, &t), 12);
        assert_eq!(compute_ipi(&v.flipped(), &t), -12);
        assert_eq!(interpret(12), Processing::High);
    }

    #[test]
    fn explicit_levels_need_every_category() {
        let t = IpiWeightTable::default();
        assert!(compute_ipi_from_levels(&[(Category::Rewatch, High)], &t).is_err());
        let all: Vec<_> = Category::ALL.iter().map(|c| (*c, High)).collect();
        assert_eq!(compute_ipi_from_levels(&all, &t).unwrap(), 0);
    }
}
