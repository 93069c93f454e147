use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{split_dataset, CorruptionSpec, DatasetSpec, SplitIndices};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Generative quantities behind a dataset. Absent when loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `M x latent_dim`, task blocks concatenated in column order.
    pub latents: Tensor,
    /// `input_dim x latent_dim`, orthonormal columns.
    pub mixing: Tensor,
    /// Per task, `K_c x m_c` class centroids.
    pub centroids: Vec<Tensor>,
}

#[derive(Debug)]
pub struct MultiSimDataset {
    pub spec: DatasetSpec,
    /// `M x input_dim`.
    pub inputs: Tensor,
    labels: Vec<Vec<u32>>,
    pub split: SplitIndices,
    pub ground_truth: Option<GroundTruth>,
    reads: Vec<AtomicUsize>,
}

impl Clone for MultiSimDataset {
    fn clone(&self) -> Self {
        Self::from_parts(self.spec.clone(), self.inputs.clone(), self.labels.clone(), self.split.clone(), self.ground_truth.clone())
    }
}

impl PartialEq for MultiSimDataset {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.inputs == other.inputs
            && self.labels == other.labels
            && self.split == other.split
            && self.ground_truth == other.ground_truth
    }
}

impl MultiSimDataset {
    pub(crate) fn from_parts(
        spec: DatasetSpec,
        inputs: Tensor,
        labels: Vec<Vec<u32>>,
        split: SplitIndices,
        ground_truth: Option<GroundTruth>,
    ) -> Self {
        let reads = labels.iter().map(|_| AtomicUsize::new(0)).collect();
        Self { spec, inputs, labels, split, ground_truth, reads }
    }

    pub fn num_samples(&self) -> usize {
        self.inputs.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn num_columns(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self, column: usize) -> usize {
        self.spec.all_tasks().nth(column).map_or(0, |t| t.num_classes)
    }

    pub fn task_name(&self, column: usize) -> &str {
        self.spec.all_tasks().nth(column).map_or("", |t| t.name.as_str())
    }

    /// Indices of the held-out label columns.
    pub fn ood_columns(&self) -> std::ops::Range<usize> {
        self.spec.num_training_tasks()..self.labels.len()
    }

    /// Label column `c`. Every call is counted; see [`MultiSimDataset::label_reads`].
    pub fn labels(&self, column: usize) -> &[u32] {
        self.reads[column].fetch_add(1, Ordering::Relaxed);
        &self.labels[column]
    }

    /// Number of times [`MultiSimDataset::labels`] returned column `c`.
    pub fn label_reads(&self, column: usize) -> usize {
        self.reads[column].load(Ordering::Relaxed)
    }

    /// Copy with the given column corrupted on the training rows only.
    pub fn with_corrupted(&self, spec: &CorruptionSpec) -> Result<MultiSimDataset> {
        let c = spec.task_index;
        if c >= self.spec.num_training_tasks() {
            return Err(Error::contract("corrupt_labels", format!("task index {c} is not a training task")));
        }
        let corrupted = super::corrupt_labels(&self.labels[c], self.num_classes(c), spec)?;
        let mut out = self.clone();
        for &i in &self.split.train {
            out.labels[c][i] = corrupted[i];
        }
        Ok(out)
    }

    pub(crate) fn raw_labels(&self) -> &[Vec<u32>] {
        &self.labels
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Gram-Schmidt on a Gaussian matrix; returns `rows x cols` with orthonormal columns.
fn random_orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| gaussian(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut data = vec![0.0; rows * cols];
    for (j, b) in basis.iter().enumerate() {
        for i in 0..rows {
            data[i * cols + j] = b[i];
        }
    }
    Tensor::matrix(rows, cols, data).expect("extents are positive")
}

/// Centroids on the sphere of radius `separation`, redrawn until pairwise distinct.
fn centroids(k: usize, dim: usize, separation: f64, rng: &mut ChaCha8Rng) -> Tensor {
    loop {
        let mut rows = Vec::with_capacity(k);
        for _ in 0..k {
            let mut v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter_mut().for_each(|x| *x *= separation / n);
            rows.push(v);
        }
        let distinct = (0..k).all(|a| {
            (a + 1..k).all(|b| rows[a].iter().zip(&rows[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>() > 1e-12)
        });
        if distinct {
            return Tensor::from_rows(&rows).expect("rectangular");
        }
    }
}

/// Draws a dataset from `spec`. Bit-identical for identical specs.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<MultiSimDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tasks: Vec<_> = spec.all_tasks().cloned().collect();
    let m = spec.num_samples;
    let latent_dim = spec.latent_dim();

    let cents: Vec<Tensor> =
        tasks.iter().map(|t| centroids(t.num_classes, t.latent_dim, t.centroid_separation, &mut rng)).collect();
    let mixing = random_orthonormal(spec.input_dim, latent_dim, &mut rng);

    let mut labels = vec![Vec::with_capacity(m); tasks.len()];
    let mut latents = Vec::with_capacity(m * latent_dim);
    for _ in 0..m {
        for (c, t) in tasks.iter().enumerate() {
            let y = rng.random_range(0..t.num_classes as u32);
            labels[c].push(y);
            let mu = cents[c].row(y as usize);
            latents.extend(mu.iter().map(|&v| v + t.within_class_noise * gaussian(&mut rng)));
        }
    }
    let latents = Tensor::matrix(m, latent_dim, latents)?;

    let d = spec.input_dim;
    let mut inputs = vec![0.0; m * d];
    for i in 0..m {
        let z = latents.row(i);
        for r in 0..d {
            let w = mixing.row(r);
            let clean: f64 = w.iter().zip(z).map(|(a, b)| a * b).sum();
            inputs[i * d + r] = clean + spec.mixing_noise * gaussian(&mut rng);
        }
    }
    let inputs = Tensor::matrix(m, d, inputs)?;
    let split = split_dataset(m, spec.split_fractions, rng.random())?;
    Ok(MultiSimDataset::from_parts(spec.clone(), inputs, labels, split, Some(GroundTruth { latents, mixing, centroids: cents })))
}
