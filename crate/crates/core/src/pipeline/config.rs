use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::SplitSpec;
use super::synthetic::SyntheticSpec;
use crate::chaos::{DEFAULT_E2_BAND, DEFAULT_EPS_FRACTION, DEFAULT_SATURATION_TOL};
use crate::error::{Error, Result};
use crate::lde_net::{IntegratorConfig, ModelSpec, TrainConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default = "default_value_column")]
        value_column: String,
        #[serde(default)]
        timestamp_column: Option<String>,
    },
    Synthetic(SyntheticSpec),
}

fn default_value_column() -> String {
    "close".to_string()
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

/// How the embedding dimension is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingChoice {
    /// Cao E1 saturation.
    #[default]
    Cao,
    /// `m` equal to the Lyapunov time.
    LyapunovTime,
    /// `m = fixed_m`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChaosConfig {
    pub tau: usize,
    pub m_max: usize,
    pub saturation_tol: f64,
    pub e2_band: f64,
    /// Wolf replacement radius as a fraction of the attractor diameter.
    pub eps_fraction: f64,
    /// Temporal exclusion window; `None` means `τ·m`.
    pub theiler: Option<usize>,
    /// Abort instead of warning when the series does not look chaotic.
    pub strict: bool,
    pub embedding: EmbeddingChoice,
    pub fixed_m: Option<usize>,
    /// Used when the chosen rule cannot produce a dimension.
    pub fallback_m: usize,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            tau: 1,
            m_max: 30,
            saturation_tol: DEFAULT_SATURATION_TOL,
            e2_band: DEFAULT_E2_BAND,
            eps_fraction: DEFAULT_EPS_FRACTION,
            theiler: None,
            strict: false,
            embedding: EmbeddingChoice::Cao,
            fixed_m: None,
            fallback_m: 4,
        }
    }
}

/// Complete description of one experiment; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub data: DataSource,
    pub split: SplitSpec,
    pub chaos: ChaosConfig,
    pub model: ModelSpec,
    pub integrator: IntegratorConfig,
    pub training: TrainConfig,
    pub horizons: Vec<usize>,
    /// Order of the least-squares AR baseline.
    pub ar_order: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 7,
            data: DataSource::default(),
            split: SplitSpec::default(),
            chaos: ChaosConfig::default(),
            model: ModelSpec::default(),
            integrator: IntegratorConfig::default(),
            training: TrainConfig::default(),
            horizons: vec![1, 2, 3, 4],
            ar_order: 1,
            output_dir: PathBuf::from("runs/experiment"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config schema version {}",
                self.schema_version
            )));
        }
        self.split.validate()?;
        self.integrator.validate()?;
        self.training.validate()?;
        if self.model.drift_width == 0 || self.model.diffusion_width == 0 {
            return Err(Error::invalid("network widths must be positive"));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::invalid("horizons must be a nonempty list of positive integers"));
        }
        let mut sorted = self.horizons.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.horizons.len() {
            return Err(Error::invalid("horizons must be distinct"));
        }
        if self.ar_order == 0 {
            return Err(Error::invalid("AR order must be at least 1"));
        }
        let c = &self.chaos;
        if c.tau == 0 || c.m_max < 2 || c.fallback_m == 0 {
            return Err(Error::invalid("chaos settings need tau >= 1, m_max >= 2, fallback_m >= 1"));
        }
        if !(c.eps_fraction > 0.0 && c.saturation_tol > 0.0 && c.e2_band > 0.0) {
            return Err(Error::invalid("chaos tolerances must be positive"));
        }
        if c.embedding == EmbeddingChoice::Fixed && !matches!(c.fixed_m, Some(m) if m > 0) {
            return Err(Error::invalid("fixed embedding requires fixed_m >= 1"));
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.n < 10 {
                return Err(Error::invalid("synthetic series needs at least 10 points"));
            }
        }
        Ok(())
    }
}
