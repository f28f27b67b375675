//! The pipeline configuration: the full reproducibility record of a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame::Signal;
use crate::models::ModelSpec;
use crate::units::GlucoseUnit;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    None,
    #[default]
    Standardize,
}

/// Persisted as JSON with exactly these snake_case fields; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub config_version: u32,
    pub data_file: String,
    pub subject_id: Option<String>,
    pub interval_minutes: u32,
    pub prediction_horizon_minutes: u32,
    pub num_lagged_samples: usize,
    pub feature_signals: Vec<Signal>,
    pub what_if_signals: Vec<Signal>,
    pub test_fraction: f64,
    pub imputation_max_gap_minutes: u32,
    pub scaling: Scaling,
    pub model_specs: Vec<ModelSpec>,
    pub unit: GlucoseUnit,
    pub random_seed: u64,
}

impl PipelineConfig {
    /// A config with the documented defaults: 120 minute horizon, 12 lags,
    /// CGM only, 25 % test split.
    pub fn new(data_file: impl Into<String>) -> Self {
        PipelineConfig {
            config_version: CONFIG_VERSION,
            data_file: data_file.into(),
            subject_id: None,
            interval_minutes: 5,
            prediction_horizon_minutes: 120,
            num_lagged_samples: 12,
            feature_signals: vec![Signal::Cgm],
            what_if_signals: Vec::new(),
            test_fraction: 0.25,
            imputation_max_gap_minutes: 30,
            scaling: Scaling::Standardize,
            model_specs: Vec::new(),
            unit: GlucoseUnit::MgDl,
            random_seed: 0,
        }
    }

    /// Number of horizon steps `H`.
    pub fn horizon_steps(&self) -> usize {
        (self.prediction_horizon_minutes / self.interval_minutes.max(1)) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.config_version != CONFIG_VERSION {
            return bad(format!(
                "config_version {} is not supported (expected {CONFIG_VERSION})",
                self.config_version
            ));
        }
        if self.interval_minutes == 0 {
            return bad("interval_minutes must be positive".into());
        }
        if self.prediction_horizon_minutes == 0
            || self.prediction_horizon_minutes % self.interval_minutes != 0
        {
            return bad(format!(
                "prediction_horizon_minutes {} must be a positive multiple of interval_minutes {}",
                self.prediction_horizon_minutes, self.interval_minutes
            ));
        }
        if self.num_lagged_samples == 0 {
            return bad("num_lagged_samples must be at least 1".into());
        }
        if !self.feature_signals.contains(&Signal::Cgm) {
            return bad("feature_signals must include CGM".into());
        }
        for (i, s) in self.feature_signals.iter().enumerate() {
            if self.feature_signals[..i].contains(s) {
                return bad(format!("feature signal `{s}` listed twice"));
            }
        }
        for s in &self.what_if_signals {
            if *s == Signal::Cgm {
                return bad("CGM cannot be a what-if signal".into());
            }
            if !self.feature_signals.contains(s) {
                return bad(format!("what-if signal `{s}` is not among feature_signals"));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} must lie in (0, 1)", self.test_fraction));
        }
        let mut names = Vec::new();
        for spec in &self.model_specs {
            spec.validate()?;
            if names.contains(&spec.name) {
                return bad(format!("model `{}` configured twice", spec.name));
            }
            names.push(spec.name.clone());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&bytes)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::parse("pipeline config", e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
