//! Experiment configuration file (`--config`).
//!
//! ```toml
//! schema_version = 1
//! [radar]        # RadarConfig, SI units
//! [tracking]     # TrackingConfig
//! [segments]     # SegmentConfig
//! [dataset]      # DatasetConfig
//! [train]        # TrainConfig
//! ```
//! Every section is optional and falls back to defaults.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use uavsense::dataset::DatasetConfig;
use uavsense::identifier::TrainConfig;
use uavsense::pipeline::{SegmentConfig, TrackingConfig};
use uavsense::RadarConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub radar: RadarConfig,
    pub tracking: TrackingConfig,
    pub segments: SegmentConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: uavsense::config::SCHEMA_VERSION,
            radar: RadarConfig::default(),
            tracking: TrackingConfig::default(),
            segments: SegmentConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| uavsense::Error::Io { path: path.into(), source: e })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| uavsense::Error::Format {
            kind: "config",
            detail: format!("{}: {e}", path.display()),
        })?;
        if cfg.schema_version != uavsense::config::SCHEMA_VERSION {
            return Err(uavsense::Error::Format {
                kind: "config",
                detail: format!(
                    "{}: schema_version {}, expected {}",
                    path.display(),
                    cfg.schema_version,
                    uavsense::config::SCHEMA_VERSION
                ),
            }
            .into());
        }
        let radar = cfg.radar.clone().validate().with_context(|| format!("radar section of {}", path.display()))?;
        Ok(Self { radar, ..cfg })
    }
}
