//! Pipeline configuration: every threshold, count and seed in one TOML file.
//! Missing fields take the defaults below; unknown fields are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{EngagementVariant, DEFAULT_SCROLL_WINDOW};
use crate::ipi::IpiWeightTable;
use crate::markov::{Smoothing, MAX_ORDER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Seconds within which same-direction seeks collapse into a scroll.
    pub scroll_window: f64,
    pub engagement_variant: EngagementVariant,
    /// Behavioral catalog in stanza format; the built-in catalog when absent.
    pub catalog: Option<PathBuf>,
    pub ipi_weights: IpiWeightTable,
    pub markov: MarkovSection,
    pub cluster: ClusterSection,
    pub predict: PredictSection,
    pub survival: SurvivalSection,
    pub sna: SnaSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            scroll_window: DEFAULT_SCROLL_WINDOW,
            engagement_variant: EngagementVariant::Full,
            catalog: None,
            ipi_weights: IpiWeightTable::default(),
            markov: MarkovSection::default(),
            cluster: ClusterSection::default(),
            predict: PredictSection::default(),
            survival: SurvivalSection::default(),
            sna: SnaSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkovSection {
    /// Highest order tried during model selection.
    pub max_order: usize,
    pub smoothing: Smoothing,
}

impl Default for MarkovSection {
    fn default() -> Self {
        Self {
            max_order: 3,
            smoothing: Smoothing::UniformUnseen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    /// Clusters of per-student transition matrices.
    pub k_markov: usize,
    /// Clusters of per-sequence VWSS metrics.
    pub k_metrics: usize,
    pub restarts: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k_markov: 8,
            k_metrics: 4,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub folds: usize,
    pub lambda: f64,
    pub rare_threshold: usize,
    /// A video counts as abandoned when its play proportion is below this
    /// percentage.
    pub dropout_vpp: f64,
    /// Video for the single-video tasks; the most watched one when absent.
    pub focus_video: Option<String>,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda: 0.1,
            rare_threshold: 2,
            dropout_vpp: 90.0,
            focus_video: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardKind {
    #[default]
    Cox,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalSection {
    pub corr_threshold: f64,
    pub model: HazardKind,
}

impl Default for SurvivalSection {
    fn default() -> Self {
        Self {
            corr_threshold: 0.5,
            model: HazardKind::Cox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnaSection {
    pub permutations: usize,
}

impl Default for SnaSection {
    fn default() -> Self {
        Self { permutations: 1000 }
    }
}

fn bad(msg: impl Into<String>) -> Result<()> {
    Err(Error::Config(msg.into()))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scroll_window > 0.0 && self.scroll_window.is_finite()) {
            return bad("scroll_window must be a positive number of seconds");
        }
        self.ipi_weights.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(1..=MAX_ORDER).contains(&self.markov.max_order) {
            return bad(format!("markov.max_order must be in 1..={MAX_ORDER}"));
        }
        if self.cluster.k_markov < 1 || self.cluster.k_metrics < 1 {
            return bad("cluster k values must be at least 1");
        }
        if self.cluster.restarts < 1 {
            return bad("cluster.restarts must be at least 1");
        }
        if self.predict.folds < 2 {
            return bad("predict.folds must be at least 2");
        }
        if !(self.predict.lambda >= 0.0 && self.predict.lambda.is_finite()) {
            return bad("predict.lambda must be finite and nonnegative");
        }
        if !(self.predict.dropout_vpp > 0.0 && self.predict.dropout_vpp.is_finite()) {
            return bad("predict.dropout_vpp must be a positive percentage");
        }
        if !(self.survival.corr_threshold > 0.0 && self.survival.corr_threshold <= 1.0) {
            return bad("survival.corr_threshold must be in (0, 1]");
        }
        if self.sna.permutations < 1 {
            return bad("sna.permutations must be at least 1");
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering, in hex.
    pub fn hash(&self) -> String {
        sha256_hex(&self.to_toml())
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
