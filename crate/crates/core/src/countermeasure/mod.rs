//! Trace-domain models of the circuit countermeasures.
//!
//! * [`apply_dsac`]: current-source signature attenuation regulated by a
//!   hysteretic switched-mode slice controller.
//! * [`apply_ro_bleed`]: randomised ring-oscillator bleed current.
//! * [`apply_tvtf`]: windowed time-domain shuffling with gain jitter.
//!
//! The canonical order is DSAC → bleed → TVTF; see [`pipeline`].

pub mod pipeline;
pub mod vdd_attack;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::AttackError;
use crate::leakage::LeakageError;
use crate::rng::RngStream;
use crate::trace::{TraceError, TraceSet};

pub use pipeline::{Acquisition, AcquisitionSource, Countermeasures};
pub use vdd_attack::{find_voltage_drop_attack, VddAttackConfig, VddPoint, VddSweep};

#[derive(Debug, Error)]
pub enum CountermeasureError {
    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("supply failure at vdd={vdd:.4} V: {reason}")]
    SupplyFailure { vdd: f64, reason: String },
    #[error("no supply voltage in the sweep beats the nominal MTD estimate")]
    NoAttackFound(Box<VddSweep>),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Leakage(#[from] LeakageError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> CountermeasureError {
    CountermeasureError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsacConfig {
    /// Residual divider `A` applied to the data-dependent current in saturation.
    pub attenuation: f64,
    /// Current delivered by one slice in saturation.
    pub i_unit: f64,
    pub v_low: f64,
    pub v_high: f64,
    /// Integrator capacitance: node voltage moves by `ΔI / cap` per sample.
    pub cap: f64,
    pub max_slices: u32,
}

impl Default for DsacConfig {
    fn default() -> Self {
        Self {
            attenuation: 64.0,
            i_unit: 1.0,
            v_low: 0.0,
            v_high: 1.0,
            cap: 1.0e4,
            max_slices: 48,
        }
    }
}

impl DsacConfig {
    pub fn validate(&self) -> Result<(), CountermeasureError> {
        if !(self.attenuation.is_finite() && self.attenuation >= 1.0) {
            return Err(invalid("attenuation", "must be >= 1"));
        }
        if !(self.i_unit.is_finite() && self.i_unit > 0.0) {
            return Err(invalid("i_unit", "must be > 0"));
        }
        if !(self.v_low.is_finite() && self.v_high.is_finite() && self.v_low < self.v_high) {
            return Err(invalid("v_low", "v_low must be below v_high"));
        }
        if !(self.cap.is_finite() && self.cap > 0.0) {
            return Err(invalid("cap", "must be > 0"));
        }
        if self.max_slices < 1 {
            return Err(invalid("max_slices", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupplyConfig {
    pub vdd: f64,
    /// Lowest supply that keeps the current source saturated.
    pub v_sat: f64,
    /// Supply at which attenuation has fully collapsed.
    pub v_lin: f64,
    /// Supply below which the core stops working.
    pub v_fail: f64,
}

impl Default for SupplyConfig {
    fn default() -> Self {
        Self {
            vdd: 1.0,
            v_sat: 0.95,
            v_lin: 0.75,
            v_fail: 0.65,
        }
    }
}

impl SupplyConfig {
    pub fn validate(&self) -> Result<(), CountermeasureError> {
        let all_finite = [self.vdd, self.v_sat, self.v_lin, self.v_fail]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || !(self.v_fail < self.v_lin && self.v_lin < self.v_sat) {
            return Err(invalid("v_fail", "need v_fail < v_lin < v_sat"));
        }
        Ok(())
    }

    pub fn at(&self, vdd: f64) -> Self {
        Self { vdd, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BleedConfig {
    pub max_strength: f64,
    pub window: usize,
}

impl Default for BleedConfig {
    fn default() -> Self {
        Self {
            max_strength: 2.0,
            window: 8,
        }
    }
}

impl BleedConfig {
    pub fn validate(&self) -> Result<(), CountermeasureError> {
        if !(self.max_strength.is_finite() && self.max_strength >= 0.0) {
            return Err(invalid("max_strength", "must be >= 0"));
        }
        if self.window < 1 {
            return Err(invalid("window", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TvtfConfig {
    pub window: usize,
    pub gain_spread: f64,
}

impl Default for TvtfConfig {
    fn default() -> Self {
        Self {
            window: 4,
            gain_spread: 0.05,
        }
    }
}

impl TvtfConfig {
    /// `window == 1` is accepted as the degenerate identity case.
    pub fn validate(&self) -> Result<(), CountermeasureError> {
        if self.window < 1 {
            return Err(invalid("window", "must be >= 1"));
        }
        if !(self.gain_spread.is_finite() && (0.0..1.0).contains(&self.gain_spread)) {
            return Err(invalid("gain_spread", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Attenuation at the configured supply: `A` in saturation, 1 once the
/// current source is fully linear, linear in between.
pub fn effective_attenuation(dsac: &DsacConfig, supply: &SupplyConfig) -> f64 {
    let a = dsac.attenuation;
    if supply.vdd >= supply.v_sat {
        a
    } else if supply.vdd <= supply.v_lin {
        1.0
    } else {
        1.0 + (a - 1.0) * (supply.vdd - supply.v_lin) / (supply.v_sat - supply.v_lin)
    }
}

/// Current one slice can deliver. Below saturation the source behaves like a
/// resistor and its current falls off linearly, reaching zero at `v_fail`.
pub fn slice_current(dsac: &DsacConfig, supply: &SupplyConfig) -> f64 {
    let f = ((supply.vdd - supply.v_fail) / (supply.v_sat - supply.v_fail)).clamp(0.0, 1.0);
    dsac.i_unit * f
}

/// Per-sample state of one regulated trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SmcRun {
    pub observable: Vec<f32>,
    pub slices: Vec<u32>,
    /// Integrator (node) voltage before each sample's update.
    pub node: Vec<f64>,
}

/// Runs the slice controller over one demand trace.
///
/// Outside `[v_low, v_high]` the count moves one slice per sample, but only
/// while the node is still drifting away from the band.
pub fn run_smc(demand: &[f32], dsac: &DsacConfig, i_slice: f64, a_eff: f64) -> SmcRun {
    let max = dsac.max_slices;
    let mut v = 0.5 * (dsac.v_low + dsac.v_high);
    let first = demand.first().map_or(0.0, |&d| f64::from(d));
    let mut n = if i_slice > 0.0 {
        ((first / i_slice).round().max(0.0) as u64).min(u64::from(max)) as u32
    } else {
        max
    };
    let mut out = SmcRun {
        observable: Vec::with_capacity(demand.len()),
        slices: Vec::with_capacity(demand.len()),
        node: Vec::with_capacity(demand.len()),
    };
    for &d in demand {
        let d = f64::from(d);
        let supplied = f64::from(n) * i_slice;
        out.observable.push((supplied + d / a_eff) as f32);
        out.slices.push(n);
        out.node.push(v);
        let drift = supplied - d;
        v += drift / dsac.cap;
        // step only while the node is still moving away from the band
        if v > dsac.v_high && drift > 0.0 && n > 0 {
            n -= 1;
        } else if v < dsac.v_low && drift < 0.0 && n < max {
            n += 1;
        }
    }
    out
}

/// Signature attenuation with switched-mode slice regulation.
///
/// Fails with `SupplyFailure` when the supply is below `v_fail`, or when the
/// slices at full count cannot source a trace's mean demand (the node would
/// droop without bound).
pub fn apply_dsac(
    traces: &TraceSet,
    dsac: &DsacConfig,
    supply: &SupplyConfig,
) -> Result<TraceSet, CountermeasureError> {
    dsac.validate()?;
    supply.validate()?;
    if supply.vdd < supply.v_fail {
        return Err(CountermeasureError::SupplyFailure {
            vdd: supply.vdd,
            reason: format!("below the functional limit v_fail={}", supply.v_fail),
        });
    }
    let a_eff = effective_attenuation(dsac, supply);
    let i_slice = slice_current(dsac, supply);
    let capacity = f64::from(dsac.max_slices) * i_slice;
    let ns = traces.n_samples();

    let starving = traces.traces().position(|row| {
        let mean = row.iter().map(|&x| f64::from(x)).sum::<f64>() / ns as f64;
        mean > capacity
    });
    if let Some(i) = starving {
        return Err(CountermeasureError::SupplyFailure {
            vdd: supply.vdd,
            reason: format!(
                "trace {i}: {} slices deliver {capacity:.3}, below the mean demand",
                dsac.max_slices
            ),
        });
    }

    let mut samples = vec![0.0f32; traces.samples().len()];
    samples
        .par_chunks_mut(ns)
        .zip(traces.samples().par_chunks(ns))
        .for_each(|(dst, src)| {
            dst.copy_from_slice(&run_smc(src, dsac, i_slice, a_eff).observable);
        });
    Ok(traces.with_samples(samples)?)
}

pub(crate) fn bleed_with_offset(
    traces: &TraceSet,
    cfg: &BleedConfig,
    first: u64,
    rng: RngStream,
) -> Result<TraceSet, CountermeasureError> {
    cfg.validate()?;
    if cfg.max_strength == 0.0 {
        return Ok(traces.clone());
    }
    let ns = traces.n_samples();
    let mut samples = traces.samples().to_vec();
    samples.par_chunks_mut(ns).enumerate().for_each(|(i, row)| {
        let mut r = rng.substream(first + i as u64).rng();
        for win in row.chunks_mut(cfg.window) {
            let strength = r.random::<f64>() * cfg.max_strength;
            let level = r.random::<f64>() * strength;
            for x in win.iter_mut() {
                let jitter = r.random::<f64>() * 0.1 * strength;
                *x = (f64::from(*x) + level + jitter) as f32;
            }
        }
    });
    Ok(traces.with_samples(samples)?)
}

/// Adds randomised bleed current: one uniform level in `[0, s_w]` per window
/// with `s_w ~ U(0, max_strength)`, plus per-sample jitter in `[0, 0.1·s_w]`.
pub fn apply_ro_bleed(
    traces: &TraceSet,
    cfg: &BleedConfig,
    rng: RngStream,
) -> Result<TraceSet, CountermeasureError> {
    bleed_with_offset(traces, cfg, 0, rng)
}

/// Variance that [`apply_ro_bleed`] adds to a sample, pooled over windows.
pub fn bleed_variance(max_strength: f64) -> f64 {
    767.0 / 14_400.0 * max_strength * max_strength
}

pub(crate) fn tvtf_with_offset(
    traces: &TraceSet,
    cfg: &TvtfConfig,
    first: u64,
    rng: RngStream,
) -> Result<TraceSet, CountermeasureError> {
    cfg.validate()?;
    let ns = traces.n_samples();
    if ns < cfg.window {
        return Err(invalid("window", format!("larger than the trace ({ns} samples)")));
    }
    let g = cfg.gain_spread;
    let mut samples = vec![0.0f32; traces.samples().len()];
    samples
        .par_chunks_mut(ns)
        .zip(traces.samples().par_chunks(ns))
        .enumerate()
        .for_each(|(i, (dst, src))| {
            let mut r = rng.substream(first + i as u64).rng();
            let mut perm: Vec<usize> = Vec::with_capacity(cfg.window);
            for (d, s) in dst.chunks_mut(cfg.window).zip(src.chunks(cfg.window)) {
                perm.clear();
                perm.extend(0..s.len());
                perm.shuffle(&mut r);
                for (out, &p) in d.iter_mut().zip(&perm) {
                    let gain = if g > 0.0 { r.random_range(1.0 - g..=1.0 + g) } else { 1.0 };
                    *out = (f64::from(s[p]) * gain) as f32;
                }
            }
        });
    Ok(traces.with_samples(samples)?)
}

/// Time-varying transfer function: each window of samples is replaced by a
/// fresh random permutation of itself, every sample scaled by an independent
/// gain in `[1 − g, 1 + g]`.
pub fn apply_tvtf(
    traces: &TraceSet,
    cfg: &TvtfConfig,
    rng: RngStream,
) -> Result<TraceSet, CountermeasureError> {
    tvtf_with_offset(traces, cfg, 0, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::{simulate_demand_traces, LeakageConfig};
    use crate::trace::default_leak_positions;

    fn flat(n_traces: usize, ns: usize, value: f32) -> TraceSet {
        TraceSet::new(
            ns,
            vec![value; n_traces * ns],
            vec![[0; 16]; n_traces],
            None,
            default_leak_positions(ns).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn attenuation_boundaries() {
        let d = DsacConfig {
            attenuation: 100.0,
            ..DsacConfig::default()
        };
        let s = SupplyConfig::default();
        assert_eq!(effective_attenuation(&d, &s.at(s.v_sat)), 100.0);
        assert_eq!(effective_attenuation(&d, &s.at(s.v_lin)), 1.0);
        let mid = effective_attenuation(&d, &s.at(0.5 * (s.v_sat + s.v_lin)));
        assert!((mid - 50.5).abs() < 1e-12);
        assert_eq!(effective_attenuation(&d, &s.at(s.v_fail - 0.1)), 1.0);
        assert_eq!(effective_attenuation(&d, &s.at(2.0)), 100.0);
    }

    #[test]
    fn constant_demand_settles_flat() {
        let d = DsacConfig {
            attenuation: 10.0,
            i_unit: 2.0,
            cap: 5.0,
            max_slices: 64,
            ..DsacConfig::default()
        };
        let s = SupplyConfig::default();
        let out = apply_dsac(&flat(2, 64, 30.0), &d, &s).unwrap();
        // 15 slices supply exactly the 30-unit demand
        for &x in out.samples() {
            assert!((x - (15.0 * 2.0 + 30.0 / 10.0)).abs() < 1e-5);
        }
    }

    #[test]
    fn unit_attenuation_with_frozen_slices_is_offset_identity() {
        let d = DsacConfig {
            attenuation: 1.0,
            i_unit: 1.0e6,
            cap: 1.0e9,
            max_slices: 4,
            ..DsacConfig::default()
        };
        let cfg = LeakageConfig {
            sigma: 1.0,
            ..LeakageConfig::default()
        };
        let ts = simulate_demand_traces(&cfg, 20, 32, RngStream::new(1, 0)).unwrap();
        let out = apply_dsac(&ts, &d, &SupplyConfig::default()).unwrap();
        for (o, row) in out.traces().zip(ts.traces()) {
            let offset = o[0] - row[0];
            for (a, b) in o.iter().zip(row) {
                assert!((a - b - offset).abs() < 1e-4);
            }
        }
        assert_eq!(out.plaintexts(), ts.plaintexts());
        assert_eq!(out.leak_positions(), ts.leak_positions());
    }

    #[test]
    fn smc_regulates_within_band() {
        let d = DsacConfig {
            attenuation: 8.0,
            i_unit: 1.0,
            v_low: 0.0,
            v_high: 1.0,
            cap: 4.0,
            max_slices: 64,
        };
        let cfg = LeakageConfig {
            sigma: 0.3,
            ..LeakageConfig::default()
        };
        let ts = simulate_demand_traces(&cfg, 50, 512, RngStream::new(2, 0)).unwrap();
        let bound = 2.0 * d.i_unit / d.cap;
        for row in ts.traces() {
            // demand within a tenth of a slice of a settled count
            let demand: Vec<f32> = row.iter().map(|&x| x.clamp(19.9, 20.1)).collect();
            let run = run_smc(&demand, &d, d.i_unit, d.attenuation);
            for &v in &run.node[64..] {
                assert!(v >= d.v_low - bound - 1e-9 && v <= d.v_high + bound + 1e-9, "{v}");
            }
        }
    }

    #[test]
    fn supply_flattening_bound() {
        let d = DsacConfig {
            attenuation: 16.0,
            i_unit: 1.0,
            cap: 20.0,
            max_slices: 64,
            ..DsacConfig::default()
        };
        let cfg = LeakageConfig {
            sigma: 0.5,
            ..LeakageConfig::default()
        };
        let ts = simulate_demand_traces(&cfg, 20, 1024, RngStream::new(3, 0)).unwrap();
        let std = |xs: &[f32]| {
            let n = xs.len() as f64;
            let m = xs.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
            (xs.iter().map(|&x| (f64::from(x) - m).powi(2)).sum::<f64>() / n).sqrt()
        };
        for row in ts.traces() {
            let run = run_smc(row, &d, d.i_unit, d.attenuation);
            let steady = &run.observable[128..];
            let ripple: Vec<f32> = run.slices[128..].iter().map(|&n| n as f32 * d.i_unit as f32).collect();
            let (a, b) = (std(steady), std(&row[128..]) / d.attenuation + std(&ripple));
            assert!(a <= b + 1e-6, "{a} > {b}");
        }
    }

    #[test]
    fn supply_failure_below_v_fail() {
        let s = SupplyConfig::default();
        let err = apply_dsac(&flat(1, 16, 20.0), &DsacConfig::default(), &s.at(s.v_fail - 0.01));
        assert!(matches!(err, Err(CountermeasureError::SupplyFailure { .. })));
    }

    #[test]
    fn starved_loop_is_a_supply_failure() {
        let d = DsacConfig {
            max_slices: 10,
            ..DsacConfig::default()
        };
        let s = SupplyConfig::default();
        assert!(apply_dsac(&flat(1, 16, 9.0), &d, &s).is_ok());
        assert!(matches!(
            apply_dsac(&flat(1, 16, 11.0), &d, &s),
            Err(CountermeasureError::SupplyFailure { .. })
        ));
    }

    #[test]
    fn just_above_v_fail_is_functional_and_unattenuated() {
        let d = DsacConfig {
            attenuation: 64.0,
            max_slices: 100_000,
            ..DsacConfig::default()
        };
        let s = SupplyConfig::default();
        let near = s.at(s.v_fail + 0.001);
        assert_eq!(effective_attenuation(&d, &near), 1.0);
        let cfg = LeakageConfig {
            sigma: 0.0,
            ..LeakageConfig::default()
        };
        let ts = simulate_demand_traces(&cfg, 5, 32, RngStream::new(4, 0)).unwrap();
        let out = apply_dsac(&ts, &d, &near).unwrap();
        assert!(out.samples().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn config_validation() {
        let bad = DsacConfig {
            v_low: 2.0,
            ..DsacConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SupplyConfig {
            v_lin: 0.5,
            ..SupplyConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TvtfConfig { window: 4, gain_spread: 1.0 }.validate().is_err());
        assert!(BleedConfig { max_strength: -1.0, window: 1 }.validate().is_err());
    }

    #[test]
    fn zero_bleed_is_identity() {
        let cfg = LeakageConfig::default();
        let ts = simulate_demand_traces(&cfg, 10, 32, RngStream::new(5, 0)).unwrap();
        let out = apply_ro_bleed(&ts, &BleedConfig { max_strength: 0.0, window: 4 }, RngStream::new(1, 1)).unwrap();
        assert_eq!(out, ts);
    }

    #[test]
    fn bleed_is_deterministic() {
        let ts = flat(4, 32, 1.0);
        let c = BleedConfig::default();
        let a = apply_ro_bleed(&ts, &c, RngStream::new(8, 2)).unwrap();
        let b = apply_ro_bleed(&ts, &c, RngStream::new(8, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, ts);
    }

    #[test]
    fn bleed_variance_matches_analytic() {
        // 1000 × 100 = 10^5 samples on a flat input
        let ts = flat(1000, 100, 0.0);
        let c = BleedConfig {
            max_strength: 3.0,
            window: 4,
        };
        let out = apply_ro_bleed(&ts, &c, RngStream::new(9, 9)).unwrap();
        let xs: Vec<f64> = out.samples().iter().map(|&x| f64::from(x)).collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = bleed_variance(3.0);
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn tvtf_preserves_window_multisets() {
        let cfg = LeakageConfig {
            sigma: 1.0,
            ..LeakageConfig::default()
        };
        let ts = simulate_demand_traces(&cfg, 10, 64, RngStream::new(6, 0)).unwrap();
        let c = TvtfConfig {
            window: 8,
            gain_spread: 0.0,
        };
        let out = apply_tvtf(&ts, &c, RngStream::new(3, 3)).unwrap();
        assert_ne!(out, ts);
        for (o, i) in out.traces().zip(ts.traces()) {
            for (wo, wi) in o.chunks(8).zip(i.chunks(8)) {
                let mut a = wo.to_vec();
                let mut b = wi.to_vec();
                a.sort_by(f32::total_cmp);
                b.sort_by(f32::total_cmp);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn tvtf_unit_window_is_identity() {
        let ts = simulate_demand_traces(&LeakageConfig::default(), 5, 32, RngStream::new(7, 0)).unwrap();
        let c = TvtfConfig {
            window: 1,
            gain_spread: 0.0,
        };
        assert_eq!(apply_tvtf(&ts, &c, RngStream::new(1, 0)).unwrap(), ts);
    }

    #[test]
    fn tvtf_gain_bounded() {
        let ts = flat(20, 32, 10.0);
        let c = TvtfConfig {
            window: 4,
            gain_spread: 0.2,
        };
        let out = apply_tvtf(&ts, &c, RngStream::new(2, 0)).unwrap();
        assert!(out.samples().iter().all(|&x| (8.0..=12.0).contains(&x)));
    }
}
