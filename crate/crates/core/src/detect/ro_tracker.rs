//! Ring-oscillator voltage-drop monitor.
//!
//! One RO tracks the divided VDD, another the AES local power node. Each
//! epoch both counts are compared; `tau` consecutive mismatching epochs raise
//! the alarm.

use serde::{Deserialize, Serialize};

use super::{invalid, DetectError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoTrackerConfig {
    /// RO counts per volt per sample.
    pub k_ro: f64,
    /// Comparison period in samples.
    pub epoch: usize,
    /// Consecutive mismatching epochs before the alarm.
    pub tau: usize,
    /// VDD divider ratio feeding the reference RO.
    pub divider: f64,
    pub sample_rate: f64,
}

impl Default for RoTrackerConfig {
    fn default() -> Self {
        Self {
            k_ro: 1.0,
            epoch: 200,
            tau: 3,
            divider: 0.8,
            sample_rate: 1.0e6,
        }
    }
}

impl RoTrackerConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.k_ro.is_finite() && self.k_ro > 0.0) {
            return Err(invalid("k_ro", "must be > 0"));
        }
        if self.epoch < 1 {
            return Err(invalid("epoch", "must be >= 1"));
        }
        if self.tau < 1 {
            return Err(invalid("tau", "must be >= 1"));
        }
        if !(self.divider.is_finite() && self.divider > 0.0) {
            return Err(invalid("divider", "must be > 0"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(invalid("sample_rate", "must be > 0"));
        }
        Ok(())
    }

    /// Worst-case alarm delay after the first mismatching epoch begins.
    pub fn latency_bound_samples(&self) -> usize {
        self.tau * self.epoch
    }

    pub fn latency_bound_seconds(&self) -> f64 {
        self.latency_bound_samples() as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochCount {
    pub epoch: usize,
    pub vdd_count: u64,
    pub aes_count: u64,
    pub mismatch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoAlarm {
    pub sample: usize,
    pub time_s: f64,
    pub epoch: usize,
}

fn ro_count(k: f64, scale: f64, v: &[f64]) -> u64 {
    (k * scale * v.iter().sum::<f64>()).max(0.0).floor() as u64
}

/// Counts for every complete epoch. A one-count difference is tolerated as
/// quantisation noise; a mismatch needs two or more.
pub fn epoch_counts(
    vdd: &[f64],
    v_aes: &[f64],
    cfg: &RoTrackerConfig,
) -> Result<Vec<EpochCount>, DetectError> {
    cfg.validate()?;
    if vdd.len() != v_aes.len() {
        return Err(DetectError::DimensionMismatch {
            expected: vdd.len(),
            actual: v_aes.len(),
        });
    }
    if vdd.iter().chain(v_aes).any(|v| !v.is_finite()) {
        return Err(invalid("voltage series", "must be finite"));
    }
    Ok(vdd
        .chunks_exact(cfg.epoch)
        .zip(v_aes.chunks_exact(cfg.epoch))
        .enumerate()
        .map(|(e, (a, b))| {
            let c1 = ro_count(cfg.k_ro, cfg.divider, a);
            let c2 = ro_count(cfg.k_ro, 1.0, b);
            EpochCount {
                epoch: e,
                vdd_count: c1,
                aes_count: c2,
                mismatch: c1.abs_diff(c2) > 1,
            }
        })
        .collect())
}

/// First sample of the `tau`-th consecutive mismatching epoch, if any.
pub fn voltage_drop_detect(
    vdd: &[f64],
    v_aes: &[f64],
    cfg: &RoTrackerConfig,
) -> Result<Option<RoAlarm>, DetectError> {
    let mut run = 0;
    for c in epoch_counts(vdd, v_aes, cfg)? {
        run = if c.mismatch { run + 1 } else { 0 };
        if run == cfg.tau {
            let sample = c.epoch * cfg.epoch;
            return Ok(Some(RoAlarm {
                sample,
                time_s: sample as f64 / cfg.sample_rate,
                epoch: c.epoch,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(n: usize, s0: usize, drop: f64) -> (Vec<f64>, Vec<f64>) {
        let vdd: Vec<f64> = (0..n).map(|i| if i < s0 { 1.0 } else { 1.0 - drop }).collect();
        (vdd, vec![0.8; n])
    }

    #[test]
    fn matched_trackers_never_alarm() {
        let cfg = RoTrackerConfig::default();
        let vdd: Vec<f64> = (0..5000).map(|i| 1.0 + 0.01 * ((i / 700) as f64)).collect();
        let aes: Vec<f64> = vdd.iter().map(|v| v * cfg.divider).collect();
        assert_eq!(voltage_drop_detect(&vdd, &aes, &cfg).unwrap(), None);
    }

    #[test]
    fn step_drop_within_bound() {
        let cfg = RoTrackerConfig::default();
        for s0 in [1000, 1037, 1199, 2500] {
            let (vdd, aes) = step(6000, s0, 0.2);
            let alarm = voltage_drop_detect(&vdd, &aes, &cfg).unwrap().unwrap();
            assert!(alarm.sample >= s0.saturating_sub(cfg.epoch));
            assert!(alarm.sample - s0 <= cfg.latency_bound_samples(), "{s0}: {alarm:?}");
            assert!(alarm.time_s - s0 as f64 / cfg.sample_rate <= 0.8e-3);
        }
    }

    #[test]
    fn sub_count_wobble_is_ignored() {
        let cfg = RoTrackerConfig::default();
        // mismatch of 0.9 counts per epoch
        let offset = 0.9 / (cfg.k_ro * cfg.epoch as f64);
        let vdd: Vec<f64> = (0..10_000).map(|i| 1.0 + 0.003 * (i as f64 * 0.01).sin()).collect();
        let aes: Vec<f64> = vdd.iter().map(|v| v * cfg.divider - offset).collect();
        assert_eq!(voltage_drop_detect(&vdd, &aes, &cfg).unwrap(), None);
    }

    #[test]
    fn alarm_lands_on_tau_th_epoch() {
        let cfg = RoTrackerConfig::default();
        let (vdd, aes) = step(3000, 1000, 0.2);
        let alarm = voltage_drop_detect(&vdd, &aes, &cfg).unwrap().unwrap();
        assert_eq!(alarm.sample, 1400);
        assert_eq!(alarm.epoch, 7);
    }

    #[test]
    fn validation() {
        let cfg = RoTrackerConfig {
            tau: 0,
            ..RoTrackerConfig::default()
        };
        assert!(voltage_drop_detect(&[1.0], &[1.0], &cfg).is_err());
        assert!(voltage_drop_detect(&[1.0], &[], &RoTrackerConfig::default()).is_err());
    }
}
