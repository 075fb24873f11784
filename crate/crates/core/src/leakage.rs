//! First-round AES leakage: the raw current demand of the crypto core.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{streams, RngStream};
use crate::trace::{default_leak_positions, TraceError, TraceSet, STATE_BYTES};

#[rustfmt::skip]
pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

pub fn sbox_lookup(byte: u8) -> u8 {
    SBOX[byte as usize]
}

#[inline]
pub fn hamming_weight(byte: u8) -> u32 {
    byte.count_ones()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageModel {
    HammingWeight,
    HammingDistance,
}

impl LeakageModel {
    /// Bits that toggle in the state register when the S-box output of
    /// `pt ^ key` is written. Under the distance model the register held the
    /// plaintext byte beforehand.
    #[inline]
    pub fn hypothesis(self, pt: u8, key: u8) -> u32 {
        let out = SBOX[(pt ^ key) as usize];
        match self {
            LeakageModel::HammingWeight => hamming_weight(out),
            LeakageModel::HammingDistance => hamming_weight(out ^ pt),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AesVariant {
    #[serde(rename = "AES-128")]
    Aes128,
    #[serde(rename = "AES-256")]
    Aes256,
}

impl AesVariant {
    pub fn key_len(self) -> usize {
        match self {
            AesVariant::Aes128 => 16,
            AesVariant::Aes256 => 32,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LeakageError {
    #[error("{field} must be a finite value >= 0, got {value}")]
    Range { field: &'static str, value: f64 },
    #[error("{variant:?} needs a {expected}-byte key, got {actual}")]
    KeyLength {
        variant: AesVariant,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakageConfig {
    pub model: LeakageModel,
    pub alpha: f64,
    pub baseline: f64,
    pub sigma: f64,
    #[serde(with = "hex::serde")]
    pub key: Vec<u8>,
    pub aes_variant: AesVariant,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            model: LeakageModel::HammingWeight,
            alpha: 1.0,
            baseline: 20.0,
            sigma: 2.0,
            key: (0u8..32).map(|i| i.wrapping_mul(17).wrapping_add(0x2b)).collect(),
            aes_variant: AesVariant::Aes256,
        }
    }
}

impl LeakageConfig {
    pub fn validate(&self) -> Result<(), LeakageError> {
        for (field, value) in [("alpha", self.alpha), ("sigma", self.sigma)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LeakageError::Range { field, value });
            }
        }
        if !self.baseline.is_finite() {
            return Err(LeakageError::Range {
                field: "baseline",
                value: self.baseline,
            });
        }
        let expected = self.aes_variant.key_len();
        if self.key.len() != expected {
            return Err(LeakageError::KeyLength {
                variant: self.aes_variant,
                expected,
                actual: self.key.len(),
            });
        }
        Ok(())
    }

    /// The 16 first-round key bytes. For AES-256 these are the first half of
    /// the key; round 1 never touches the second half.
    pub fn round_key(&self) -> [u8; STATE_BYTES] {
        let mut k = [0u8; STATE_BYTES];
        k.copy_from_slice(&self.key[..STATE_BYTES]);
        k
    }
}

/// Noise-free leakage of one state byte. `prev_state` is only read by the
/// Hamming-distance model.
pub fn leakage_value(cfg: &LeakageConfig, pt_byte: u8, key_byte: u8, prev_state: u8) -> f64 {
    let out = SBOX[(pt_byte ^ key_byte) as usize];
    let bits = match cfg.model {
        LeakageModel::HammingWeight => hamming_weight(out),
        LeakageModel::HammingDistance => hamming_weight(out ^ prev_state),
    };
    cfg.alpha * f64::from(bits) + cfg.baseline
}

/// Noise-free current demand for traces `first..first + count`.
///
/// Trace `i` draws its plaintext from `rng.substream(i)` of the plaintext
/// stream, so any split of the index range yields the same traces.
pub fn demand_traces(
    cfg: &LeakageConfig,
    first: u64,
    count: usize,
    n_samples: usize,
    rng: RngStream,
) -> Result<TraceSet, LeakageError> {
    cfg.validate()?;
    if count == 0 {
        return Err(TraceError::NoTraces.into());
    }
    let positions = default_leak_positions(n_samples)?;
    let key = cfg.round_key();
    let pt_stream = RngStream::new(rng.seed, rng.stream_id ^ streams::PLAINTEXT).at(rng.counter);

    let plaintexts: Vec<[u8; STATE_BYTES]> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = pt_stream.substream(first + i as u64).rng();
            let mut pt = [0u8; STATE_BYTES];
            r.fill(&mut pt[..]);
            pt
        })
        .collect();

    let mut samples = vec![cfg.baseline as f32; count * n_samples];
    samples
        .par_chunks_mut(n_samples)
        .zip(plaintexts.par_iter())
        .for_each(|(row, pt)| {
            for (j, &pos) in positions.iter().enumerate() {
                row[pos] = leakage_value(cfg, pt[j], key[j], pt[j]) as f32;
            }
        });

    Ok(TraceSet::new(n_samples, samples, plaintexts, None, positions)?)
}

/// Adds i.i.d. Gaussian noise, trace `first + i` drawing from `rng.substream(first + i)`.
pub fn add_gaussian_noise(ts: &TraceSet, sigma: f64, first: u64, rng: RngStream) -> TraceSet {
    if sigma == 0.0 {
        return ts.clone();
    }
    let mut samples = ts.samples().to_vec();
    samples
        .par_chunks_mut(ts.n_samples())
        .enumerate()
        .for_each(|(i, row)| {
            let mut r = rng.substream(first + i as u64).rng();
            for x in row.iter_mut() {
                let z: f64 = r.sample(StandardNormal);
                *x = (f64::from(*x) + sigma * z) as f32;
            }
        });
    ts.with_samples(samples)
        .expect("noise keeps geometry and finiteness")
}

/// Unprotected traces: first-round leakage plus Gaussian(0, sigma) noise on
/// every sample.
pub fn simulate_demand_traces(
    cfg: &LeakageConfig,
    n_traces: usize,
    n_samples: usize,
    rng: RngStream,
) -> Result<TraceSet, LeakageError> {
    let clean = demand_traces(cfg, 0, n_traces, n_samples, rng)?;
    let noise = RngStream::new(rng.seed, rng.stream_id ^ streams::DEMAND_NOISE).at(rng.counter);
    Ok(add_gaussian_noise(&clean, cfg.sigma, 0, noise))
}
