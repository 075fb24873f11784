//! Fault-injection and probing detection: simulated sensor traces, a small
//! fully-connected classifier, and the ring-oscillator voltage-drop monitor.

pub mod mlp;
pub mod ro_tracker;
pub mod sensor;

use thiserror::Error;

pub use mlp::{
    classify, evaluate, gradient_check, train_detector, DetectorModel, EpochStats, Evaluation,
    TrainConfig, TrainReport,
};
pub use ro_tracker::{epoch_counts, voltage_drop_detect, EpochCount, RoAlarm, RoTrackerConfig};
pub use sensor::{
    generate_dataset, simulate_sensor, Dataset, Scenario, SensorParams, SensorTrace, MIN_SENSOR_SAMPLES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("input has {actual} samples, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Divergence { epoch: usize },
    #[error("model file: {0}")]
    Model(String),
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> DetectError {
    DetectError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}
