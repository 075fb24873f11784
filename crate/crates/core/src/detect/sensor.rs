//! Waveform archetypes for the on-chip H-field/supply sensor.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{invalid, DetectError};
use crate::rng::{streams, RngStream};

pub const MIN_SENSOR_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Benign,
    ClockGlitch,
    VoltageGlitch,
    EmProbe,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Benign,
        Scenario::ClockGlitch,
        Scenario::VoltageGlitch,
        Scenario::EmProbe,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Benign => "benign",
            Scenario::ClockGlitch => "clock_glitch",
            Scenario::VoltageGlitch => "voltage_glitch",
            Scenario::EmProbe => "em_probe",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| DetectError::UnknownScenario(s.to_string()))
    }
}

/// Shape parameters of the four archetypes. Amplitudes are in units of `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorParams {
    pub baseline: f64,
    pub sigma: f64,
    pub sample_rate: f64,
    pub pulse_amplitude: f64,
    pub pulse_width: usize,
    pub sag_depth: (f64, f64),
    pub sag_width: (usize, usize),
    /// Range of the probe envelope gain reached at the final sample; the
    /// envelope ramps linearly from 1 to `1 + coupling`.
    pub coupling: (f64, f64),
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            baseline: 1.0,
            sigma: 0.05,
            sample_rate: 1.0e6,
            pulse_amplitude: 12.0,
            pulse_width: 6,
            sag_depth: (6.0, 10.0),
            sag_width: (12, 32),
            coupling: (0.1, 0.2),
        }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid("sigma", "must be >= 0"));
        }
        if !self.baseline.is_finite() {
            return Err(invalid("baseline", "must be finite"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(invalid("sample_rate", "must be > 0"));
        }
        if self.pulse_width < 1 {
            return Err(invalid("pulse_width", "must be >= 1"));
        }
        if !(self.sag_depth.0 <= self.sag_depth.1 && self.sag_depth.0 >= 0.0) {
            return Err(invalid("sag_depth", "need 0 <= min <= max"));
        }
        if !(1 <= self.sag_width.0 && self.sag_width.0 <= self.sag_width.1) {
            return Err(invalid("sag_width", "need 1 <= min <= max"));
        }
        if !(self.coupling.0 <= self.coupling.1 && self.coupling.0 >= 0.0) {
            return Err(invalid("coupling", "need 0 <= min <= max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    pub samples: Vec<f64>,
    pub label: Scenario,
    pub sample_rate: f64,
}

fn uniform<R: Rng>(r: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        r.random_range(lo..hi)
    } else {
        lo
    }
}

/// One sensor trace. Every draw comes from `rng`, so a trace is fixed by its
/// stream address.
pub fn simulate_sensor(
    scenario: Scenario,
    n_samples: usize,
    rng: RngStream,
    params: &SensorParams,
) -> Result<SensorTrace, DetectError> {
    params.validate()?;
    if n_samples < MIN_SENSOR_SAMPLES {
        return Err(invalid(
            "n_samples",
            format!("need at least {MIN_SENSOR_SAMPLES}, got {n_samples}"),
        ));
    }
    let mut r = rng.rng();
    let sigma = params.sigma;
    let n = n_samples;
    let noise: Vec<f64> = (0..n)
        .map(|_| sigma * r.sample::<f64, _>(StandardNormal))
        .collect();
    let mut x: Vec<f64> = noise.iter().map(|z| params.baseline + z).collect();

    match scenario {
        Scenario::Benign => {}
        Scenario::ClockGlitch => {
            let w = params.pulse_width.min(n);
            let at = r.random_range(0..=n - w);
            for v in &mut x[at..at + w] {
                *v += params.pulse_amplitude * sigma;
            }
        }
        Scenario::VoltageGlitch => {
            let depth = uniform(&mut r, params.sag_depth.0, params.sag_depth.1) * sigma;
            let w = r
                .random_range(params.sag_width.0..=params.sag_width.1)
                .min(n);
            let at = r.random_range(0..=n - w);
            for v in &mut x[at..at + w] {
                *v -= depth;
            }
        }
        Scenario::EmProbe => {
            let kappa = uniform(&mut r, params.coupling.0, params.coupling.1);
            for (t, v) in x.iter_mut().enumerate() {
                *v *= 1.0 + kappa * t as f64 / (n - 1) as f64;
            }
        }
    }
    Ok(SensorTrace {
        samples: x,
        label: scenario,
        sample_rate: params.sample_rate,
    })
}

/// Labeled sensor traces, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_samples: usize,
    pub samples: Vec<f64>,
    pub labels: Vec<Scenario>,
    pub sample_rate: f64,
}

impl Dataset {
    pub fn new(
        n_samples: usize,
        samples: Vec<f64>,
        labels: Vec<Scenario>,
        sample_rate: f64,
    ) -> Result<Self, DetectError> {
        if n_samples == 0 || samples.len() != n_samples * labels.len() {
            return Err(DetectError::DimensionMismatch {
                expected: n_samples * labels.len(),
                actual: samples.len(),
            });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(invalid("samples", "must be finite"));
        }
        Ok(Self {
            n_samples,
            samples,
            labels,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_samples..(i + 1) * self.n_samples]
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.len());
        let start = start.min(end);
        Dataset {
            n_samples: self.n_samples,
            samples: self.samples[start * self.n_samples..end * self.n_samples].to_vec(),
            labels: self.labels[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }
}

/// `n` traces with labels drawn uniformly over the four scenarios. Trace `i`
/// uses substream `i`, so a larger dataset extends a smaller one.
pub fn generate_dataset(
    n: usize,
    n_samples: usize,
    params: &SensorParams,
    seed: u64,
) -> Result<Dataset, DetectError> {
    let label_stream = RngStream::new(seed, streams::SENSOR_LABELS);
    let trace_stream = RngStream::new(seed, streams::SENSOR);
    let mut samples = Vec::with_capacity(n * n_samples);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let k = label_stream.substream(i).rng().random_range(0..4usize);
        let sc = Scenario::ALL[k];
        let t = simulate_sensor(sc, n_samples, trace_stream.substream(i), params)?;
        samples.extend_from_slice(&t.samples);
        labels.push(sc);
    }
    Dataset::new(n_samples, samples, labels, params.sample_rate)
}
