//! Experiment configuration as JSON. Unknown fields are rejected; omitted
//! fields take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, json_err, StoreError};
use crate::countermeasure::{
    BleedConfig, CountermeasureError, DsacConfig, SupplyConfig, TvtfConfig,
};
use crate::detect::{DetectError, RoTrackerConfig, SensorParams, TrainConfig};
use crate::leakage::{LeakageConfig, LeakageError};
use crate::trace::STATE_BYTES;

/// MTD evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSettings {
    /// First rank checkpoint.
    pub checkpoint_start: usize,
    /// Ratio between successive checkpoints.
    pub checkpoint_factor: f64,
    /// Trace budget of an MTD run.
    pub max_traces: usize,
    /// Consecutive rank-1 checkpoints required for disclosure.
    pub stability_window: usize,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            checkpoint_start: 10,
            checkpoint_factor: 1.25,
            max_traces: 100_000,
            stability_window: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSettings {
    pub n_samples: usize,
    pub sensor: SensorParams,
    pub train: TrainConfig,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            n_samples: 128,
            sensor: SensorParams::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Samples per power trace.
    pub n_samples: usize,
    pub leakage: LeakageConfig,
    pub supply: SupplyConfig,
    pub dsac: DsacConfig,
    pub bleed: BleedConfig,
    pub tvtf: TvtfConfig,
    pub attack: AttackSettings,
    pub detector: DetectorSettings,
    pub monitor: RoTrackerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_samples: 64,
            leakage: LeakageConfig::default(),
            supply: SupplyConfig::default(),
            dsac: DsacConfig::default(),
            bleed: BleedConfig::default(),
            tvtf: TvtfConfig::default(),
            attack: AttackSettings::default(),
            detector: DetectorSettings::default(),
            monitor: RoTrackerConfig::default(),
        }
    }
}

fn range(field: String, reason: impl Into<String>) -> StoreError {
    StoreError::Range {
        field,
        reason: reason.into(),
    }
}

fn leakage_err(e: LeakageError) -> StoreError {
    match e {
        LeakageError::Range { field, value } => {
            range(format!("leakage.{field}"), format!("must be finite and >= 0, got {value}"))
        }
        LeakageError::KeyLength { .. } => range("leakage.key".into(), e.to_string()),
        other => range("leakage".into(), other.to_string()),
    }
}

fn cm_err(section: &str, e: CountermeasureError) -> StoreError {
    match e {
        CountermeasureError::InvalidConfig { field, reason } => {
            range(format!("{section}.{field}"), reason)
        }
        other => range(section.into(), other.to_string()),
    }
}

fn detect_err(section: &str, e: DetectError) -> StoreError {
    match e {
        DetectError::InvalidConfig { field, reason } => range(format!("{section}.{field}"), reason),
        other => range(section.into(), other.to_string()),
    }
}

impl ExperimentConfig {
    /// Checks every section. Errors name the offending field by its JSON path.
    /// A supply below `v_fail` is not an error here; it surfaces as a supply
    /// failure when traces are simulated.
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.n_samples < STATE_BYTES {
            return Err(range(
                "n_samples".into(),
                format!("need at least {STATE_BYTES}, got {}", self.n_samples),
            ));
        }
        self.leakage.validate().map_err(leakage_err)?;
        if !self.supply.vdd.is_finite() {
            return Err(range("supply.vdd".into(), "must be finite"));
        }
        self.supply.validate().map_err(|e| cm_err("supply", e))?;
        self.dsac.validate().map_err(|e| cm_err("dsac", e))?;
        self.bleed.validate().map_err(|e| cm_err("bleed", e))?;
        self.tvtf.validate().map_err(|e| cm_err("tvtf", e))?;
        let a = &self.attack;
        if a.checkpoint_start < 2 {
            return Err(range("attack.checkpoint_start".into(), "must be >= 2"));
        }
        if !(a.checkpoint_factor.is_finite() && a.checkpoint_factor > 1.0) {
            return Err(range("attack.checkpoint_factor".into(), "must be > 1"));
        }
        if a.max_traces < a.checkpoint_start {
            return Err(range("attack.max_traces".into(), "must be >= checkpoint_start"));
        }
        if a.stability_window < 1 {
            return Err(range("attack.stability_window".into(), "must be >= 1"));
        }
        let d = &self.detector;
        if d.n_samples < crate::detect::MIN_SENSOR_SAMPLES {
            return Err(range(
                "detector.n_samples".into(),
                format!("need at least {}", crate::detect::MIN_SENSOR_SAMPLES),
            ));
        }
        d.sensor.validate().map_err(|e| detect_err("detector.sensor", e))?;
        d.train.validate().map_err(|e| detect_err("detector.train", e))?;
        self.monitor.validate().map_err(|e| detect_err("monitor", e))?;
        Ok(())
    }
}

/// Parses and validates; `origin` is only used in error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig, StoreError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| json_err(origin, e))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, StoreError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, path)
}
