//! Correlation power analysis and minimum-traces-to-disclosure.
//!
//! The accumulator keeps sufficient statistics partitioned by plaintext byte
//! value: for each attacked byte, the count and per-sample sum of the traces
//! whose plaintext byte equals `v`. Every hypothesis leakage is a function of
//! that byte alone, so the per-hypothesis Pearson moments (Σy, Σy², Σxy) are
//! recovered exactly at finalisation while the per-trace update costs
//! `O(bytes × samples)` instead of `O(256 × bytes × samples)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leakage::LeakageModel;
use crate::trace::{TraceSet, STATE_BYTES};

pub type SourceError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("batch has {actual} samples per trace, accumulator expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("CPA needs at least 2 traces, got {0}")]
    InsufficientTraces(usize),
    #[error("every sample in the trace set is identical")]
    DegenerateTraces,
    #[error("checkpoints must be strictly increasing and non-zero")]
    BadCheckpoints,
    #[error("stability window must be >= 1")]
    BadStabilityWindow,
    #[error("trace source failed: {0}")]
    Source(#[source] SourceError),
}

/// Raw Pearson moments for one (hypothesis, sample) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonMoments {
    pub n: f64,
    pub sx: f64,
    pub sxx: f64,
    pub sy: f64,
    pub syy: f64,
    pub sxy: f64,
}

impl PearsonMoments {
    /// Pearson ρ, or 0 when either variable has zero variance.
    pub fn correlation(&self) -> f64 {
        pearson(self.n, self.sx, self.sxx, self.sy, self.syy, self.sxy)
    }
}

#[inline]
fn pearson(n: f64, sx: f64, sxx: f64, sy: f64, syy: f64, sxy: f64) -> f64 {
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    let r = (n * sxy - sx * sy) / (vx * vy).sqrt();
    r.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpaAccumulator {
    n_samples: usize,
    n: u64,
    sum_x: Vec<f64>,
    sum_xx: Vec<f64>,
    /// `[byte][value]` trace counts.
    class_count: Vec<[u64; 256]>,
    /// `[byte][value][sample]` sums, flattened.
    class_sum: Vec<Vec<f64>>,
}

impl CpaAccumulator {
    pub fn new(n_samples: usize) -> Self {
        Self {
            n_samples,
            n: 0,
            sum_x: vec![0.0; n_samples],
            sum_xx: vec![0.0; n_samples],
            class_count: vec![[0; 256]; STATE_BYTES],
            class_sum: vec![vec![0.0; 256 * n_samples]; STATE_BYTES],
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_traces(&self) -> u64 {
        self.n
    }

    /// Folds a batch in. Each byte's class sums are updated by a single task
    /// in trace order, so the result is independent of the thread count.
    pub fn update(&mut self, batch: &TraceSet) -> Result<(), AttackError> {
        if batch.n_samples() != self.n_samples {
            return Err(AttackError::DimensionMismatch {
                expected: self.n_samples,
                actual: batch.n_samples(),
            });
        }
        let ns = self.n_samples;
        for row in batch.traces() {
            for ((sx, sxx), &x) in self.sum_x.iter_mut().zip(self.sum_xx.iter_mut()).zip(row) {
                let x = f64::from(x);
                *sx += x;
                *sxx += x * x;
            }
        }
        let pts = batch.plaintexts();
        self.class_count
            .par_iter_mut()
            .zip(self.class_sum.par_iter_mut())
            .enumerate()
            .for_each(|(b, (counts, sums))| {
                for (row, pt) in batch.traces().zip(pts) {
                    let v = pt[b] as usize;
                    counts[v] += 1;
                    let dst = &mut sums[v * ns..(v + 1) * ns];
                    for (d, &x) in dst.iter_mut().zip(row) {
                        *d += f64::from(x);
                    }
                }
            });
        self.n += batch.n_traces() as u64;
        Ok(())
    }

    /// Adds another accumulator's statistics (associative and commutative up
    /// to floating-point rounding).
    pub fn merge(&mut self, other: &CpaAccumulator) -> Result<(), AttackError> {
        if other.n_samples != self.n_samples {
            return Err(AttackError::DimensionMismatch {
                expected: self.n_samples,
                actual: other.n_samples,
            });
        }
        self.n += other.n;
        for (a, b) in self.sum_x.iter_mut().zip(&other.sum_x) {
            *a += b;
        }
        for (a, b) in self.sum_xx.iter_mut().zip(&other.sum_xx) {
            *a += b;
        }
        for (a, b) in self.class_count.iter_mut().zip(&other.class_count) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.class_sum.iter_mut().zip(&other.class_sum) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn moments(
        &self,
        byte: usize,
        model: LeakageModel,
        key: u8,
        sample: usize,
    ) -> PearsonMoments {
        let ns = self.n_samples;
        let (mut sy, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for v in 0..256 {
            let h = f64::from(model.hypothesis(v as u8, key));
            let c = self.class_count[byte][v] as f64;
            sy += c * h;
            syy += c * h * h;
            sxy += h * self.class_sum[byte][v * ns + sample];
        }
        PearsonMoments {
            n: self.n as f64,
            sx: self.sum_x[sample],
            sxx: self.sum_xx[sample],
            sy,
            syy,
            sxy,
        }
    }

    pub fn correlation_at(&self, byte: usize, model: LeakageModel, key: u8, sample: usize) -> f64 {
        self.moments(byte, model, key, sample).correlation()
    }

    /// `256 × n_samples` correlation matrix for one byte, row = hypothesis.
    pub fn correlation_matrix(&self, byte: usize, model: LeakageModel) -> Vec<f64> {
        let ns = self.n_samples;
        let n = self.n as f64;
        let counts = &self.class_count[byte];
        let sums = &self.class_sum[byte];
        let mut out = vec![0.0; 256 * ns];
        let mut by_level = vec![0.0; 9 * ns];
        for k in 0..256usize {
            by_level.iter_mut().for_each(|x| *x = 0.0);
            let (mut sy, mut syy) = (0.0, 0.0);
            for v in 0..256usize {
                let h = model.hypothesis(v as u8, k as u8) as usize;
                let c = counts[v] as f64;
                sy += c * h as f64;
                syy += c * (h * h) as f64;
                if h > 0 {
                    let dst = &mut by_level[h * ns..(h + 1) * ns];
                    for (d, s) in dst.iter_mut().zip(&sums[v * ns..(v + 1) * ns]) {
                        *d += s;
                    }
                }
            }
            let row = &mut out[k * ns..(k + 1) * ns];
            for (s, r) in row.iter_mut().enumerate() {
                let sxy: f64 = (1..9).map(|h| h as f64 * by_level[h * ns + s]).sum();
                *r = pearson(n, self.sum_x[s], self.sum_xx[s], sy, syy, sxy);
            }
        }
        out
    }

    pub fn result(&self, model: LeakageModel) -> CpaResult {
        let bytes = (0..STATE_BYTES)
            .into_par_iter()
            .map(|b| ByteCpa::from_matrix(b, &self.correlation_matrix(b, model), self.n_samples))
            .collect();
        CpaResult {
            n_traces: self.n,
            bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ByteCpa {
    pub byte: usize,
    /// Signed correlation at the sample where |ρ| peaks, per hypothesis.
    pub peak_corr: Vec<f64>,
    pub peak_sample: Vec<usize>,
    /// Hypotheses sorted by |ρ| descending, ties to the lower key value.
    pub ranking: Vec<u8>,
}

impl ByteCpa {
    fn from_matrix(byte: usize, matrix: &[f64], ns: usize) -> Self {
        let mut peak_corr = vec![0.0; 256];
        let mut peak_sample = vec![0; 256];
        for k in 0..256 {
            let row = &matrix[k * ns..(k + 1) * ns];
            let (mut best, mut at) = (0.0f64, 0usize);
            for (s, &r) in row.iter().enumerate() {
                if r.abs() > best.abs() {
                    best = r;
                    at = s;
                }
            }
            peak_corr[k] = best;
            peak_sample[k] = at;
        }
        let mut ranking: Vec<u8> = (0..=255u8).collect();
        ranking.sort_by(|&a, &b| {
            peak_corr[b as usize]
                .abs()
                .total_cmp(&peak_corr[a as usize].abs())
                .then(a.cmp(&b))
        });
        Self {
            byte,
            peak_corr,
            peak_sample,
            ranking,
        }
    }

    /// 1-based rank of `key`.
    pub fn rank_of(&self, key: u8) -> usize {
        self.ranking.iter().position(|&k| k == key).expect("ranking is a permutation") + 1
    }

    pub fn best_key(&self) -> u8 {
        self.ranking[0]
    }

    pub fn best_sample(&self) -> usize {
        self.peak_sample[self.best_key() as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpaResult {
    pub n_traces: u64,
    pub bytes: Vec<ByteCpa>,
}

impl CpaResult {
    pub fn recovered_key(&self) -> [u8; STATE_BYTES] {
        std::array::from_fn(|b| self.bytes[b].best_key())
    }

    /// Worst per-byte rank of the true key; 1 means the full key is disclosed.
    pub fn key_rank(&self, key: &[u8; STATE_BYTES]) -> usize {
        self.bytes
            .iter()
            .map(|b| b.rank_of(key[b.byte]))
            .max()
            .unwrap_or(1)
    }

    /// Mean over bytes of the true key's peak |ρ|.
    pub fn key_correlation(&self, key: &[u8; STATE_BYTES]) -> f64 {
        let total: f64 = self
            .bytes
            .iter()
            .map(|b| b.peak_corr[key[b.byte] as usize].abs())
            .sum();
        total / self.bytes.len() as f64
    }
}

/// One-shot CPA over an in-memory trace set.
pub fn cpa_attack(traces: &TraceSet, model: LeakageModel) -> Result<CpaResult, AttackError> {
    if traces.n_traces() < 2 {
        return Err(AttackError::InsufficientTraces(traces.n_traces()));
    }
    let first = traces.samples()[0];
    if traces.samples().iter().all(|&x| x == first) {
        return Err(AttackError::DegenerateTraces);
    }
    let mut acc = CpaAccumulator::new(traces.n_samples());
    acc.update(traces)?;
    Ok(acc.result(model))
}

/// Anything that can hand out consecutive batches of traces. Returning fewer
/// traces than requested signals exhaustion.
pub trait TraceSource {
    fn n_samples(&self) -> usize;
    fn next_batch(&mut self, count: usize) -> Result<TraceSet, SourceError>;
}

/// Serves an in-memory trace set front to back.
pub struct InMemorySource<'a> {
    traces: &'a TraceSet,
    cursor: usize,
}

impl<'a> InMemorySource<'a> {
    pub fn new(traces: &'a TraceSet) -> Self {
        Self { traces, cursor: 0 }
    }
}

impl TraceSource for InMemorySource<'_> {
    fn n_samples(&self) -> usize {
        self.traces.n_samples()
    }

    fn next_batch(&mut self, count: usize) -> Result<TraceSet, SourceError> {
        let end = (self.cursor + count).min(self.traces.n_traces());
        let batch = self.traces.slice(self.cursor, end);
        self.cursor = end;
        Ok(batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub checkpoint: usize,
    pub rank: usize,
    pub best_corr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtdReport {
    /// `None` = not disclosed within the traces used.
    pub mtd: Option<usize>,
    pub rank_curve: Vec<RankPoint>,
    pub stability_window: usize,
    pub traces_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtdConfig {
    pub model: LeakageModel,
    pub key: [u8; STATE_BYTES],
    pub checkpoints: Vec<usize>,
    pub stability_window: usize,
    /// Stop pulling traces once disclosure is confirmed.
    pub stop_when_disclosed: bool,
}

/// `start, start·factor, start·factor², …` rounded, deduplicated, up to `max`.
pub fn geometric_checkpoints(start: usize, factor: f64, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut x = start.max(1) as f64;
    while x.round() as usize <= max {
        let c = x.round() as usize;
        if out.last() != Some(&c) {
            out.push(c);
        }
        x *= factor.max(1.0 + 1e-9);
    }
    out
}

fn disclosed_at(curve: &[RankPoint], window: usize) -> Option<usize> {
    curve
        .windows(window)
        .find(|w| w.iter().all(|p| p.rank == 1))
        .map(|w| w[0].checkpoint)
}

pub fn compute_mtd(source: &mut dyn TraceSource, cfg: &MtdConfig) -> Result<MtdReport, AttackError> {
    if cfg.checkpoints.is_empty()
        || cfg.checkpoints[0] == 0
        || cfg.checkpoints.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(AttackError::BadCheckpoints);
    }
    if cfg.stability_window == 0 {
        return Err(AttackError::BadStabilityWindow);
    }
    let mut acc = CpaAccumulator::new(source.n_samples());
    let mut curve = Vec::new();
    let mut mtd = None;
    for &cp in &cfg.checkpoints {
        let want = cp - acc.n_traces() as usize;
        let batch = source.next_batch(want).map_err(AttackError::Source)?;
        let got = batch.n_traces();
        if got > 0 {
            acc.update(&batch)?;
        }
        if got < want {
            break;
        }
        let res = acc.result(cfg.model);
        curve.push(RankPoint {
            checkpoint: cp,
            rank: res.key_rank(&cfg.key),
            best_corr: res.key_correlation(&cfg.key),
        });
        mtd = disclosed_at(&curve, cfg.stability_window);
        if mtd.is_some() && cfg.stop_when_disclosed {
            break;
        }
    }
    if curve.is_empty() && acc.n_traces() >= 2 {
        let res = acc.result(cfg.model);
        curve.push(RankPoint {
            checkpoint: acc.n_traces() as usize,
            rank: res.key_rank(&cfg.key),
            best_corr: res.key_correlation(&cfg.key),
        });
    }
    Ok(MtdReport {
        mtd,
        rank_curve: curve,
        stability_window: cfg.stability_window,
        traces_used: acc.n_traces() as usize,
    })
}

/// Rule-of-thumb trace count for a correlation `rho` to stand out at
/// confidence `z` (normal quantile): `3 + 8 (z / ln((1+ρ)/(1−ρ)))²`.
pub fn estimate_mtd(rho: f64, z: f64) -> f64 {
    let r = rho.abs();
    if r <= 0.0 {
        return f64::INFINITY;
    }
    if r >= 1.0 {
        return 3.0;
    }
    let fz = ((1.0 + r) / (1.0 - r)).ln();
    3.0 + 8.0 * (z / fz).powi(2)
}

/// Normal quantile for α = 1e-4, the confidence used by [`estimate_mtd`] callers.
pub const MTD_Z: f64 = 3.719;
