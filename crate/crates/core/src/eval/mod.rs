//! Frozen-encoder evaluation: embeddings, linear probes, top-1 accuracy and
//! bootstrap standard deviations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamRef, SgdMomentum, Tape, Tensor};
use crate::error::{Error, Result};
use crate::losses::xent_on_tape;
use crate::model::{encode, Linear, ModelParams};
use crate::synth::SplitIndices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Label column probed by the command-line runner.
    pub target_task: usize,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    /// Center and scale each feature with training-split statistics.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            probe_epochs: 20,
            probe_lr: 0.05,
            momentum: 0.9,
            batch_size: 64,
            target_task: 0,
            bootstrap_resamples: 1000,
            seed: 0,
            standardize: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.probe_epochs == 0 || self.batch_size == 0 || self.bootstrap_resamples == 0 {
            return Err(Error::contract("ProbeConfig", "probe_epochs, batch_size and bootstrap_resamples must be >= 1"));
        }
        if !(self.probe_lr > 0.0) || !self.probe_lr.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::contract("ProbeConfig", "probe_lr must be positive and momentum in [0, 1)"));
        }
        Ok(())
    }
}

/// Encoder forward pass only: no augmentation, no projection heads.
pub fn extract_embeddings(params: &ModelParams, inputs: &Tensor) -> Result<Tensor> {
    encode(params, inputs)
}

/// `x W + b` without recording gradients.
pub fn linear_logits(layer: &Linear, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = layer.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let out = bound.forward(&mut tape, xv)?;
    Ok(tape.value(out).clone())
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<u32> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

pub fn top1_accuracy(predictions: &[u32], labels: &[u32]) -> Result<f64> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::contract(
            "top1_accuracy",
            format!("need equal non-zero lengths, got {} predictions and {} labels", predictions.len(), labels.len()),
        ));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Standard deviation of the accuracy over `resamples` bootstrap resamples
/// of the per-sample correctness flags.
pub fn bootstrap_std(flags: &[bool], resamples: usize, seed: u64) -> Result<f64> {
    if flags.is_empty() || resamples == 0 {
        return Err(Error::contract("bootstrap_std", "need at least one flag and one resample"));
    }
    let n = flags.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accs: Vec<f64> = (0..resamples)
        .map(|_| (0..n).filter(|_| flags[rng.random_range(0..n)]).count() as f64 / n as f64)
        .collect();
    let mean = accs.iter().sum::<f64>() / resamples as f64;
    if resamples == 1 {
        return Ok(0.0);
    }
    Ok((accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt())
}

/// A trained probe: optional feature standardization followed by a linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub layer: Linear,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LinearProbe {
    fn features(&self, h: &Tensor) -> Tensor {
        let mut f = h.clone();
        let d = self.mean.len();
        for row in f.data_mut().chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) * s;
            }
        }
        f
    }

    pub fn predict(&self, h: &Tensor) -> Result<Vec<u32>> {
        if h.cols() != self.mean.len() {
            return Err(Error::contract("linear_probe", format!("probe expects {} features, got {}", self.mean.len(), h.cols())));
        }
        Ok(argmax_rows(&linear_logits(&self.layer, &self.features(h))?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub probe: LinearProbe,
    /// Top-1 accuracy on the test split.
    pub accuracy: f64,
    /// Bootstrap standard deviation of `accuracy`.
    pub std: f64,
    /// Per test row, whether the prediction was correct.
    pub correct: Vec<bool>,
}

/// Trains a linear classifier on frozen embeddings (train split) and scores
/// it on the test split.
pub fn linear_probe(
    embeddings: &Tensor,
    labels: &[u32],
    split: &SplitIndices,
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    linear_probe_with_targets(embeddings, labels, labels, split, num_classes, cfg)
}

/// [`linear_probe`] with separate label columns for fitting (train rows of
/// `train_labels`) and scoring (test rows of `test_labels`).
pub fn linear_probe_with_targets(
    embeddings: &Tensor,
    train_labels: &[u32],
    test_labels: &[u32],
    split: &SplitIndices,
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    cfg.validate()?;
    let m = embeddings.rows();
    if train_labels.len() != m || test_labels.len() != m {
        return Err(Error::contract("linear_probe", format!("{m} embeddings but {} / {} labels", train_labels.len(), test_labels.len())));
    }
    if split.train.is_empty() || split.test.is_empty() || split.train.iter().chain(&split.test).any(|&i| i >= m) {
        return Err(Error::contract("linear_probe", "split must have non-empty train and test parts within range"));
    }
    if let Some(y) = split.train.iter().chain(&split.test).map(|&i| train_labels[i].max(test_labels[i])).find(|&y| y as usize >= num_classes) {
        return Err(Error::contract("linear_probe", format!("label {y} outside [0, {num_classes})")));
    }
    let first = train_labels[split.train[0]];
    if split.train.iter().all(|&i| train_labels[i] == first) {
        return Err(Error::degenerate("linear_probe", format!("every training label is {first}")));
    }

    let d = embeddings.cols();
    let (mean, scale) = if cfg.standardize {
        feature_stats(embeddings, &split.train)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let mut probe = LinearProbe { layer: Linear::zeros(d, num_classes), mean, scale };
    let features = probe.features(embeddings);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = SgdMomentum::new(cfg.probe_lr, cfg.momentum)?;
    let mut order = split.train.clone();
    for _ in 0..cfg.probe_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let labels: Vec<u32> = batch.iter().map(|&i| train_labels[i]).collect();
            let mut tape = Tape::new();
            let bound = probe.layer.bind(&mut tape, true);
            let x = tape.constant(features.select_rows(batch));
            let logits = bound.forward(&mut tape, x)?;
            let loss = xent_on_tape(&mut tape, logits, &labels)?;
            let mut grads = tape.backward(loss)?;
            let (gw, gb) = (grads.take(bound.weight), grads.take(bound.bias));
            opt.step(&mut [
                ParamRef { name: "probe.weight".into(), value: probe.layer.weight.data_mut(), grad: gw.as_deref() },
                ParamRef { name: "probe.bias".into(), value: probe.layer.bias.data_mut(), grad: gb.as_deref() },
            ])?;
        }
    }

    let test = embeddings.select_rows(&split.test);
    let pred = probe.predict(&test)?;
    let truth: Vec<u32> = split.test.iter().map(|&i| test_labels[i]).collect();
    let correct: Vec<bool> = pred.iter().zip(&truth).map(|(p, y)| p == y).collect();
    let accuracy = top1_accuracy(&pred, &truth)?;
    let std = bootstrap_std(&correct, cfg.bootstrap_resamples, cfg.seed)?;
    Ok(ProbeResult { probe, accuracy, std, correct })
}

fn feature_stats(x: &Tensor, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in rows {
        mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; d];
    for &i in rows {
        var.iter_mut().zip(x.row(i)).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
    }
    let scale = var.iter().map(|v| if v.sqrt() > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }).collect();
    (mean, scale)
}
