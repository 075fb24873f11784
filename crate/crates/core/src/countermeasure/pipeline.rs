//! Demand → countermeasures → measurement: the canonical acquisition chain.

use serde::{Deserialize, Serialize};

use super::{
    apply_dsac, bleed_with_offset, tvtf_with_offset, BleedConfig, CountermeasureError, DsacConfig,
    SupplyConfig, TvtfConfig,
};
use crate::attack::{SourceError, TraceSource};
use crate::leakage::{add_gaussian_noise, demand_traces, LeakageConfig};
use crate::rng::{streams, RngStream};
use crate::trace::TraceSet;

/// Enabled stages; `None` skips a stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Countermeasures {
    pub dsac: Option<DsacConfig>,
    pub bleed: Option<BleedConfig>,
    pub tvtf: Option<TvtfConfig>,
}

impl Countermeasures {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.dsac.is_none() && self.bleed.is_none() && self.tvtf.is_none()
    }

    /// Stage names in application order.
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.dsac.is_some() {
            v.push("dsac");
        }
        if self.bleed.is_some() {
            v.push("bleed");
        }
        if self.tvtf.is_some() {
            v.push("tvtf");
        }
        v
    }
}

/// A fully specified measurement setup. The core's demand is generated noise
/// free, passed through the countermeasures, and the probe then adds
/// Gaussian noise of `leakage.sigma` at the supply pin.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub leakage: LeakageConfig,
    pub supply: SupplyConfig,
    pub countermeasures: Countermeasures,
    pub n_samples: usize,
    pub seed: u64,
}

impl Acquisition {
    /// Traces `first..first + count`. Trace `i` is the same no matter how the
    /// index range is batched.
    pub fn acquire(&self, first: u64, count: usize) -> Result<TraceSet, CountermeasureError> {
        // the core itself stops working, with or without DSAC
        if self.supply.vdd < self.supply.v_fail {
            return Err(CountermeasureError::SupplyFailure {
                vdd: self.supply.vdd,
                reason: format!("below the functional limit v_fail={}", self.supply.v_fail),
            });
        }
        let base = RngStream::new(self.seed, 0);
        let mut ts = demand_traces(&self.leakage, first, count, self.n_samples, base)?;
        if let Some(dsac) = &self.countermeasures.dsac {
            ts = apply_dsac(&ts, dsac, &self.supply)?;
        }
        if let Some(bleed) = &self.countermeasures.bleed {
            ts = bleed_with_offset(&ts, bleed, first, RngStream::new(self.seed, streams::BLEED))?;
        }
        if let Some(tvtf) = &self.countermeasures.tvtf {
            ts = tvtf_with_offset(&ts, tvtf, first, RngStream::new(self.seed, streams::TVTF))?;
        }
        let noise = RngStream::new(self.seed, streams::DEMAND_NOISE);
        Ok(add_gaussian_noise(&ts, self.leakage.sigma, first, noise))
    }

    pub fn source(&self) -> AcquisitionSource<'_> {
        AcquisitionSource {
            acq: self,
            next: 0,
            limit: None,
        }
    }
}

/// Streams an [`Acquisition`] batch by batch, optionally capped at `limit` traces.
pub struct AcquisitionSource<'a> {
    acq: &'a Acquisition,
    next: u64,
    limit: Option<u64>,
}

impl AcquisitionSource<'_> {
    pub fn with_limit(mut self, limit: usize) -> Self {
        self.limit = Some(limit as u64);
        self
    }
}

impl TraceSource for AcquisitionSource<'_> {
    fn n_samples(&self) -> usize {
        self.acq.n_samples
    }

    fn next_batch(&mut self, count: usize) -> Result<TraceSet, SourceError> {
        let count = match self.limit {
            Some(l) => count.min(l.saturating_sub(self.next) as usize),
            None => count,
        };
        if count == 0 {
            return Ok(TraceSet::empty(
                self.acq.n_samples,
                crate::trace::default_leak_positions(self.acq.n_samples)?,
            )?);
        }
        let ts = self.acq.acquire(self.next, count)?;
        self.next += count as u64;
        Ok(ts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::simulate_demand_traces;

    fn acq(cm: Countermeasures) -> Acquisition {
        Acquisition {
            leakage: LeakageConfig::default(),
            supply: SupplyConfig::default(),
            countermeasures: cm,
            n_samples: 64,
            seed: 21,
        }
    }

    #[test]
    fn empty_pipeline_is_unprotected_simulation() {
        let a = acq(Countermeasures::none());
        let direct = simulate_demand_traces(&a.leakage, 40, 64, RngStream::new(21, 0)).unwrap();
        assert_eq!(a.acquire(0, 40).unwrap(), direct);
    }

    #[test]
    fn batching_does_not_change_traces() {
        let a = acq(Countermeasures {
            dsac: Some(DsacConfig::default()),
            bleed: Some(BleedConfig::default()),
            tvtf: Some(TvtfConfig::default()),
        });
        let whole = a.acquire(0, 30).unwrap();
        let mut src = a.source();
        let mut parts = src.next_batch(7).unwrap();
        parts.append(&src.next_batch(23).unwrap()).unwrap();
        assert_eq!(whole, parts);
    }

    #[test]
    fn stages_preserve_geometry_and_metadata() {
        let plain = acq(Countermeasures::none()).acquire(0, 10).unwrap();
        let full = acq(Countermeasures {
            dsac: Some(DsacConfig::default()),
            bleed: Some(BleedConfig::default()),
            tvtf: Some(TvtfConfig::default()),
        })
        .acquire(0, 10)
        .unwrap();
        assert_eq!(full.n_traces(), plain.n_traces());
        assert_eq!(full.n_samples(), plain.n_samples());
        assert_eq!(full.plaintexts(), plain.plaintexts());
        assert_eq!(full.leak_positions(), plain.leak_positions());
    }

    #[test]
    fn limit_caps_the_source() {
        let a = acq(Countermeasures::none());
        let mut src = a.source().with_limit(25);
        assert_eq!(src.next_batch(20).unwrap().n_traces(), 20);
        assert_eq!(src.next_batch(20).unwrap().n_traces(), 5);
        assert_eq!(src.next_batch(20).unwrap().n_traces(), 0);
    }
}
