//! Search for a supply voltage that weakens signature attenuation.
//!
//! Every grid point replays the same acquisition seed (common random
//! numbers), so differences between points come from the supply alone.

use serde::{Deserialize, Serialize};

use super::{
    effective_attenuation, invalid, Acquisition, BleedConfig, CountermeasureError, Countermeasures,
    DsacConfig, SupplyConfig, TvtfConfig,
};
use crate::attack::{estimate_mtd, CpaAccumulator, MTD_Z};
use crate::leakage::LeakageConfig;
use crate::trace::STATE_BYTES;

#[derive(Debug, Clone, PartialEq)]
pub struct VddAttackConfig {
    pub leakage: LeakageConfig,
    /// Nominal operating point; the sweep overrides `vdd` only.
    pub supply: SupplyConfig,
    pub dsac: DsacConfig,
    pub bleed: Option<BleedConfig>,
    pub tvtf: Option<TvtfConfig>,
    pub n_samples: usize,
    pub seed: u64,
    /// Traces acquired at each grid point.
    pub budget: usize,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl VddAttackConfig {
    pub fn validate(&self) -> Result<(), CountermeasureError> {
        self.supply.validate()?;
        self.dsac.validate()?;
        if self.budget < 2 {
            return Err(invalid("budget", "need at least 2 traces"));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(invalid("step", "must be > 0"));
        }
        if !(self.lo.is_finite() && self.lo > self.supply.v_fail) {
            return Err(invalid("lo", format!("must exceed v_fail={}", self.supply.v_fail)));
        }
        if !(self.hi.is_finite() && self.lo <= self.hi) {
            return Err(invalid("hi", "must be >= lo"));
        }
        if self.hi > self.supply.vdd {
            return Err(invalid("hi", format!("must not exceed nominal vdd={}", self.supply.vdd)));
        }
        Ok(())
    }

    /// Sweep voltages `lo, lo + step, …` up to `hi` inclusive.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VddPoint {
    pub vdd: f64,
    pub a_eff: f64,
    /// False when the core or the slice array fails at this supply.
    pub functional: bool,
    /// Correct-key correlation at the leak sample, averaged over the 16 bytes.
    pub rho: f64,
    pub mtd_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VddSweep {
    pub nominal: VddPoint,
    pub points: Vec<VddPoint>,
    /// Index into `points` of the functional point with the lowest estimate,
    /// if it beats nominal.
    pub best: Option<usize>,
}

impl VddSweep {
    pub fn best_point(&self) -> Option<&VddPoint> {
        self.best.map(|i| &self.points[i])
    }

    /// Nominal over best MTD estimate.
    pub fn gain(&self) -> Option<f64> {
        self.best_point()
            .map(|p| self.nominal.mtd_estimate / p.mtd_estimate)
    }
}

fn evaluate(cfg: &VddAttackConfig, vdd: f64) -> Result<VddPoint, CountermeasureError> {
    let supply = cfg.supply.at(vdd);
    let a_eff = effective_attenuation(&cfg.dsac, &supply);
    let acq = Acquisition {
        leakage: cfg.leakage.clone(),
        supply,
        countermeasures: Countermeasures {
            dsac: Some(cfg.dsac.clone()),
            bleed: cfg.bleed.clone(),
            tvtf: cfg.tvtf.clone(),
        },
        n_samples: cfg.n_samples,
        seed: cfg.seed,
    };
    let ts = match acq.acquire(0, cfg.budget) {
        Ok(ts) => ts,
        Err(CountermeasureError::SupplyFailure { .. }) => {
            return Ok(VddPoint {
                vdd,
                a_eff,
                functional: false,
                rho: 0.0,
                mtd_estimate: f64::INFINITY,
            })
        }
        Err(e) => return Err(e),
    };
    let mut acc = CpaAccumulator::new(cfg.n_samples);
    acc.update(&ts)?;
    let key = cfg.leakage.round_key();
    let rho = (0..STATE_BYTES)
        .map(|j| acc.correlation_at(j, cfg.leakage.model, key[j], ts.leak_positions()[j]))
        .sum::<f64>()
        / STATE_BYTES as f64;
    // a negative mean is noise; treat it as no signal
    let mtd_estimate = if rho > 0.0 { estimate_mtd(rho, MTD_Z) } else { f64::INFINITY };
    Ok(VddPoint {
        vdd,
        a_eff,
        functional: true,
        rho,
        mtd_estimate,
    })
}

/// Sweeps the supply and reports the voltage with the lowest estimated MTD.
///
/// Returns `NoAttackFound` carrying the full sweep when no functional point
/// estimates strictly fewer traces than the nominal supply.
pub fn find_voltage_drop_attack(cfg: &VddAttackConfig) -> Result<VddSweep, CountermeasureError> {
    cfg.validate()?;
    let nominal = evaluate(cfg, cfg.supply.vdd)?;
    if !nominal.functional {
        return Err(CountermeasureError::SupplyFailure {
            vdd: cfg.supply.vdd,
            reason: "the nominal supply is not functional".into(),
        });
    }
    let points = cfg
        .grid()
        .into_iter()
        .map(|v| evaluate(cfg, v))
        .collect::<Result<Vec<_>, _>>()?;
    let best = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.functional && p.mtd_estimate < nominal.mtd_estimate)
        .min_by(|a, b| a.1.mtd_estimate.total_cmp(&b.1.mtd_estimate))
        .map(|(i, _)| i);
    let sweep = VddSweep {
        nominal,
        points,
        best,
    };
    if sweep.best.is_none() {
        return Err(CountermeasureError::NoAttackFound(Box::new(sweep)));
    }
    Ok(sweep)
}
