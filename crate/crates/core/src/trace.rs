//! The trace container shared by every stage of the workbench.

use thiserror::Error;

/// Number of AES state bytes, and therefore of leak positions.
pub const STATE_BYTES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("need at least {STATE_BYTES} samples per trace, got {0}")]
    TooFewSamples(usize),
    #[error("need at least one trace")]
    NoTraces,
    #[error("sample buffer holds {actual} values, expected {expected}")]
    SampleCount { expected: usize, actual: usize },
    #[error("{what} has {actual} entries, expected {expected}")]
    MetadataLength {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("leak positions must be strictly increasing and below {n_samples}")]
    LeakPositions { n_samples: usize },
    #[error("non-finite sample at trace {trace}, index {sample}")]
    NonFinite { trace: usize, sample: usize },
    #[error("cannot append traces with {actual} samples to a set of {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
}

/// Simulated power samples, row-major `n_traces × n_samples`, plus the
/// per-trace plaintexts (and optionally ciphertexts) an attacker observes.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    n_traces: usize,
    n_samples: usize,
    samples: Vec<f32>,
    plaintexts: Vec<[u8; STATE_BYTES]>,
    ciphertexts: Option<Vec<[u8; STATE_BYTES]>>,
    leak_positions: [usize; STATE_BYTES],
}

/// Evenly spread leak positions: byte `j` sits in the middle of the j-th
/// sixteenth of the trace.
pub fn default_leak_positions(n_samples: usize) -> Result<[usize; STATE_BYTES], TraceError> {
    if n_samples < STATE_BYTES {
        return Err(TraceError::TooFewSamples(n_samples));
    }
    let mut pos = [0usize; STATE_BYTES];
    for (j, p) in pos.iter_mut().enumerate() {
        *p = (2 * j + 1) * n_samples / (2 * STATE_BYTES);
    }
    Ok(pos)
}

impl TraceSet {
    pub fn new(
        n_samples: usize,
        samples: Vec<f32>,
        plaintexts: Vec<[u8; STATE_BYTES]>,
        ciphertexts: Option<Vec<[u8; STATE_BYTES]>>,
        leak_positions: [usize; STATE_BYTES],
    ) -> Result<Self, TraceError> {
        let n_traces = plaintexts.len();
        if n_samples < STATE_BYTES {
            return Err(TraceError::TooFewSamples(n_samples));
        }
        let expected = n_traces
            .checked_mul(n_samples)
            .ok_or(TraceError::SampleCount {
                expected: usize::MAX,
                actual: samples.len(),
            })?;
        if samples.len() != expected {
            return Err(TraceError::SampleCount {
                expected,
                actual: samples.len(),
            });
        }
        if let Some(ct) = &ciphertexts {
            if ct.len() != n_traces {
                return Err(TraceError::MetadataLength {
                    what: "ciphertexts",
                    expected: n_traces,
                    actual: ct.len(),
                });
            }
        }
        let increasing = leak_positions.windows(2).all(|w| w[0] < w[1]);
        if !increasing || leak_positions[STATE_BYTES - 1] >= n_samples {
            return Err(TraceError::LeakPositions { n_samples });
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(TraceError::NonFinite {
                trace: i / n_samples,
                sample: i % n_samples,
            });
        }
        Ok(Self {
            n_traces,
            n_samples,
            samples,
            plaintexts,
            ciphertexts,
            leak_positions,
        })
    }

    /// An empty set with the given geometry, used as the seed for [`TraceSet::append`].
    pub fn empty(n_samples: usize, leak_positions: [usize; STATE_BYTES]) -> Result<Self, TraceError> {
        Self::new(n_samples, Vec::new(), Vec::new(), None, leak_positions)
    }

    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn trace(&self, i: usize) -> &[f32] {
        &self.samples[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn traces(&self) -> std::slice::ChunksExact<'_, f32> {
        self.samples.chunks_exact(self.n_samples)
    }

    pub fn plaintexts(&self) -> &[[u8; STATE_BYTES]] {
        &self.plaintexts
    }

    pub fn ciphertexts(&self) -> Option<&[[u8; STATE_BYTES]]> {
        self.ciphertexts.as_deref()
    }

    pub fn leak_positions(&self) -> &[usize; STATE_BYTES] {
        &self.leak_positions
    }

    /// Replaces the sample matrix, keeping all metadata. Used by the
    /// countermeasure transforms, which never change trace geometry.
    pub fn with_samples(&self, samples: Vec<f32>) -> Result<Self, TraceError> {
        Self::new(
            self.n_samples,
            samples,
            self.plaintexts.clone(),
            self.ciphertexts.clone(),
            self.leak_positions,
        )
    }

    /// Traces `[start, end)` as a new set.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.n_traces);
        let start = start.min(end);
        Self {
            n_traces: end - start,
            n_samples: self.n_samples,
            samples: self.samples[start * self.n_samples..end * self.n_samples].to_vec(),
            plaintexts: self.plaintexts[start..end].to_vec(),
            ciphertexts: self.ciphertexts.as_ref().map(|c| c[start..end].to_vec()),
            leak_positions: self.leak_positions,
        }
    }

    pub fn append(&mut self, other: &TraceSet) -> Result<(), TraceError> {
        if other.n_samples != self.n_samples {
            return Err(TraceError::ShapeMismatch {
                expected: self.n_samples,
                actual: other.n_samples,
            });
        }
        self.ciphertexts = match (self.ciphertexts.take(), &other.ciphertexts) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if self.n_traces == 0 => Some(b.clone()),
            _ => None,
        };
        self.samples.extend_from_slice(&other.samples);
        self.plaintexts.extend_from_slice(&other.plaintexts);
        self.n_traces += other.n_traces;
        Ok(())
    }
}
