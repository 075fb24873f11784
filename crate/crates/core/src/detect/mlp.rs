//! Fully-connected classifier: rectifier hidden layers, softmax output,
//! cross-entropy loss, mini-batch SGD with momentum.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::sensor::{Dataset, Scenario};
use super::{invalid, DetectError};
use crate::rng::{streams, RngStream};

pub const N_CLASSES: usize = 4;

/// Dense layer, `weights` row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub layers: Vec<Layer>,
    /// Inputs are mapped to `(x − input_offset) · input_scale` before layer 0.
    pub input_offset: f64,
    pub input_scale: f64,
    pub final_loss: Option<f64>,
    /// Set when training saw fewer than two classes.
    pub degenerate: bool,
}

impl DetectorModel {
    /// He-initialised weights, zero biases.
    pub fn init(sizes: &[usize], rng: RngStream) -> Result<Self, DetectError> {
        check_sizes(sizes)?;
        let mut r = rng.rng();
        let layers = sizes
            .windows(2)
            .map(|w| {
                let std = (2.0 / w[0] as f64).sqrt();
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1])
                        .map(|_| std * r.sample::<f64, _>(StandardNormal))
                        .collect(),
                    biases: vec![0.0; w[1]],
                }
            })
            .collect();
        Ok(Self {
            layers,
            input_offset: 0.0,
            input_scale: 1.0,
            final_loss: None,
            degenerate: false,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, DetectError> {
        check_sizes(sizes)?;
        Ok(Self {
            layers: sizes
                .windows(2)
                .map(|w| Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: vec![0.0; w[0] * w[1]],
                    biases: vec![0.0; w[1]],
                })
                .collect(),
            input_offset: 0.0,
            input_scale: 1.0,
            final_loss: None,
            degenerate: false,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Checks shapes and finiteness, e.g. after loading from disk.
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.layers.is_empty() {
            return Err(DetectError::Model("no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(DetectError::Model(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(DetectError::Model(format!("layer {i} input does not match layer {}", i - 1)));
            }
            if l.weights.iter().chain(&l.biases).any(|x| !x.is_finite()) {
                return Err(DetectError::Model(format!("layer {i} has non-finite parameters")));
            }
        }
        if self.layers.last().map(|l| l.outputs) != Some(N_CLASSES) {
            return Err(DetectError::Model(format!("output layer must have {N_CLASSES} units")));
        }
        if !(self.input_offset.is_finite() && self.input_scale.is_finite() && self.input_scale != 0.0) {
            return Err(DetectError::Model("bad input normalisation".into()));
        }
        Ok(())
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            if k < l.weights.len() {
                return &mut l.weights[k];
            }
            k -= l.weights.len();
            if k < l.biases.len() {
                return &mut l.biases[k];
            }
            k -= l.biases.len();
        }
        panic!("parameter index out of range")
    }

    /// Activations of every layer; `acts[0]` is the normalised input.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(
            x.iter()
                .map(|v| (v - self.input_offset) * self.input_scale)
                .collect::<Vec<_>>(),
        );
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let a = &acts[li];
            let mut z: Vec<f64> = l
                .weights
                .chunks_exact(l.inputs)
                .zip(&l.biases)
                .map(|(row, b)| b + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            if li < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                softmax(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, DetectError> {
        if x.len() != self.input_size() {
            return Err(DetectError::DimensionMismatch {
                expected: self.input_size(),
                actual: x.len(),
            });
        }
        Ok(self.forward(x).pop().expect("at least one layer"))
    }
}

fn check_sizes(sizes: &[usize]) -> Result<(), DetectError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(invalid("layer sizes", "need at least input and output, all non-zero"));
    }
    if *sizes.last().unwrap() != N_CLASSES {
        return Err(invalid("layer sizes", format!("output layer must have {N_CLASSES} units")));
    }
    Ok(())
}

fn softmax(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Argmax label (ties to the lowest index) and its probability.
pub fn classify(model: &DetectorModel, x: &[f64]) -> Result<(Scenario, f64), DetectError> {
    let p = model.predict_proba(x)?;
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    Ok((Scenario::from_index(best).expect("4 outputs"), p[best]))
}

/// Adds the cross-entropy gradient of one example into `grad` (flattened in
/// layer order, weights then biases); returns the example's loss.
fn backprop(model: &DetectorModel, x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let acts = model.forward(x);
    let probs = acts.last().unwrap();
    let loss = -probs[label].max(1e-300).ln();

    let mut delta: Vec<f64> = probs.clone();
    delta[label] -= 1.0;

    let mut offsets = Vec::with_capacity(model.layers.len());
    let mut off = 0;
    for l in &model.layers {
        offsets.push(off);
        off += l.weights.len() + l.biases.len();
    }
    for li in (0..model.layers.len()).rev() {
        let l = &model.layers[li];
        let a = &acts[li];
        let base = offsets[li];
        for (o, d) in delta.iter().enumerate() {
            let row = &mut grad[base + o * l.inputs..base + (o + 1) * l.inputs];
            for (g, x) in row.iter_mut().zip(a) {
                *g += d * x;
            }
            grad[base + l.weights.len() + o] += d;
        }
        if li > 0 {
            let mut prev = vec![0.0; l.inputs];
            for (o, d) in delta.iter().enumerate() {
                for (p, w) in prev.iter_mut().zip(&l.weights[o * l.inputs..(o + 1) * l.inputs]) {
                    *p += d * w;
                }
            }
            // rectifier derivative; activation 0 means the unit was off
            for (p, a) in prev.iter_mut().zip(a) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    loss
}

/// Mean loss and mean gradient over a batch of `(input, label)` pairs.
pub fn batch_gradient(model: &DetectorModel, batch: &[(&[f64], usize)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.n_params()];
    let mut loss = 0.0;
    for (x, y) in batch {
        loss += backprop(model, x, *y, &mut grad);
    }
    let n = batch.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

fn example_loss(model: &DetectorModel, x: &[f64], label: usize) -> f64 {
    -model.forward(x).last().unwrap()[label].max(1e-300).ln()
}

/// Largest relative error between backprop and central differences (step
/// `1e-4`) over every parameter. Meant for small models.
pub fn gradient_check(model: &DetectorModel, x: &[f64], label: usize) -> f64 {
    let (_, analytic) = batch_gradient(model, &[(x, label)]);
    let h = 1e-4;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + h;
        let up = example_loss(&probe, x, label);
        *probe.param_mut(k) = orig - h;
        let down = example_loss(&probe, x, label);
        *probe.param_mut(k) = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 40,
            batch_size: 32,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("learning_rate", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden", "layer sizes must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: DetectorModel,
    /// Full-dataset loss and accuracy after each epoch.
    pub history: Vec<EpochStats>,
}

fn dataset_stats(model: &DetectorModel, data: &Dataset) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let p = model.forward(data.row(i)).pop().unwrap();
        let y = data.labels[i].index();
        loss -= p[y].max(1e-300).ln();
        let mut best = 0;
        for (k, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = k;
            }
        }
        correct += usize::from(best == y);
    }
    let n = data.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

/// Deterministic for a fixed `cfg.seed`: initialisation and per-epoch
/// shuffles come from dedicated streams and batches are reduced in order.
pub fn train_detector(data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport, DetectError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(DetectError::EmptyDataset);
    }
    let mut sizes = vec![data.n_samples];
    sizes.extend(&cfg.hidden);
    sizes.push(N_CLASSES);
    let mut model = DetectorModel::init(&sizes, RngStream::new(cfg.seed, streams::TRAIN_INIT))?;

    let n = data.samples.len() as f64;
    let mean = data.samples.iter().sum::<f64>() / n;
    let var = data.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    model.input_offset = mean;
    model.input_scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    model.degenerate = data.class_counts().iter().filter(|&&c| c > 0).count() < 2;

    let shuffle = RngStream::new(cfg.seed, streams::TRAIN_SHUFFLE);
    let mut velocity = vec![0.0; model.n_params()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle.substream(epoch as u64).rng());
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk
                .iter()
                .map(|&i| (data.row(i), data.labels[i].index()))
                .collect();
            let (_, grad) = batch_gradient(&model, &batch);
            for (k, (v, g)) in velocity.iter_mut().zip(&grad).enumerate() {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *model.param_mut(k) += *v;
            }
        }
        let (loss, accuracy) = dataset_stats(&model, data);
        if !loss.is_finite() {
            return Err(DetectError::Divergence { epoch });
        }
        history.push(EpochStats {
            epoch: epoch + 1,
            loss,
            accuracy,
        });
    }
    model.final_loss = history.last().map(|h| h.loss);
    Ok(TrainReport { model, history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
    pub accuracy: f64,
}

impl Evaluation {
    pub fn recall(&self, class: usize) -> f64 {
        let row = &self.confusion[class];
        let total: usize = row.iter().sum();
        if total == 0 {
            f64::NAN
        } else {
            row[class] as f64 / total as f64
        }
    }
}

pub fn evaluate(model: &DetectorModel, data: &Dataset) -> Result<Evaluation, DetectError> {
    if data.n_samples != model.input_size() {
        return Err(DetectError::DimensionMismatch {
            expected: model.input_size(),
            actual: data.n_samples,
        });
    }
    let mut confusion = [[0usize; N_CLASSES]; N_CLASSES];
    for i in 0..data.len() {
        let (pred, _) = classify(model, data.row(i))?;
        confusion[data.labels[i].index()][pred.index()] += 1;
    }
    let correct: usize = (0..N_CLASSES).map(|k| confusion[k][k]).sum();
    Ok(Evaluation {
        confusion,
        accuracy: correct as f64 / data.len().max(1) as f64,
    })
}
