//! Synthetic multi-similarity datasets.
//!
//! Each task owns a block of latent coordinates holding a class centroid plus
//! Gaussian noise. The blocks are concatenated and pushed through a fixed
//! random matrix with orthonormal columns, then observation noise is added.
//! Held-out (OOD) tasks get their own block, so their labels are present in
//! the inputs but never supervised during encoder training.

mod augment;
mod corrupt;
mod generate;
mod io;
mod split;

pub use augment::{augment_pair, augment_pair_with};
pub use corrupt::{corrupt_labels, CorruptionSpec};
pub use generate::{generate_dataset, GroundTruth, MultiSimDataset};
pub use split::{split_dataset, SplitIndices, DEFAULT_FRACTIONS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One categorical attribute and how its classes are laid out in latent space.
/// Omitted layout fields take the values of [`TaskSpec::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub num_classes: usize,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_separation")]
    pub centroid_separation: f64,
    #[serde(default = "default_noise")]
    pub within_class_noise: f64,
}

fn default_latent_dim() -> usize {
    TaskSpec::new("", 2).latent_dim
}

fn default_separation() -> f64 {
    TaskSpec::new("", 2).centroid_separation
}

fn default_noise() -> f64 {
    TaskSpec::new("", 2).within_class_noise
}

impl TaskSpec {
    pub fn new(name: &str, num_classes: usize) -> Self {
        Self {
            name: name.to_string(),
            num_classes,
            latent_dim: 4,
            centroid_separation: 1.0,
            within_class_noise: 0.35,
        }
    }

    fn validate(&self) -> Result<()> {
        let op = "TaskSpec";
        if self.num_classes < 2 {
            return Err(Error::contract(op, format!("task {} needs at least 2 classes", self.name)));
        }
        if self.latent_dim == 0 {
            return Err(Error::contract(op, format!("task {} has an empty latent block", self.name)));
        }
        if !(self.centroid_separation > 0.0) {
            return Err(Error::contract(op, format!("task {} needs positive centroid separation", self.name)));
        }
        if !(self.within_class_noise >= 0.0) {
            return Err(Error::contract(op, format!("task {} has negative noise", self.name)));
        }
        Ok(())
    }
}

/// Missing fields in a structured-text spec take their values from
/// [`DatasetSpec::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub training_tasks: Vec<TaskSpec>,
    pub ood_tasks: Vec<TaskSpec>,
    pub num_samples: usize,
    pub input_dim: usize,
    pub mixing_noise: f64,
    pub seed: u64,
    pub split_fractions: [f64; 3],
}

impl Default for DatasetSpec {
    /// Desk-scale default: three training tasks, one held-out task.
    fn default() -> Self {
        Self {
            training_tasks: vec![TaskSpec::new("category", 4), TaskSpec::new("closure", 5), TaskSpec::new("gender", 3)],
            ood_tasks: vec![TaskSpec::new("brand", 5)],
            num_samples: 6000,
            input_dim: 64,
            mixing_noise: 0.1,
            seed: 0,
            split_fractions: DEFAULT_FRACTIONS,
        }
    }
}

impl DatasetSpec {
    pub fn all_tasks(&self) -> impl Iterator<Item = &TaskSpec> {
        self.training_tasks.iter().chain(&self.ood_tasks)
    }

    pub fn num_training_tasks(&self) -> usize {
        self.training_tasks.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.all_tasks().map(|t| t.latent_dim).sum()
    }

    /// Column index of a task by name (training tasks first, then OOD).
    pub fn task_column(&self, name: &str) -> Option<usize> {
        self.all_tasks().position(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let op = "generate_dataset";
        if self.training_tasks.is_empty() {
            return Err(Error::contract(op, "at least one training task is required"));
        }
        for t in self.all_tasks() {
            t.validate()?;
        }
        let mut names: Vec<&str> = self.all_tasks().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract(op, "task names must be unique"));
        }
        if self.input_dim < self.latent_dim() {
            return Err(Error::contract(
                op,
                format!("input_dim {} is smaller than the total latent dimension {}", self.input_dim, self.latent_dim()),
            ));
        }
        let max_k = self.all_tasks().map(|t| t.num_classes).max().unwrap_or(0);
        if self.num_samples < 10 * max_k {
            return Err(Error::contract(op, format!("need at least {} samples, got {}", 10 * max_k, self.num_samples)));
        }
        if !(self.mixing_noise >= 0.0) {
            return Err(Error::contract(op, "mixing_noise must be non-negative"));
        }
        split::validate_fractions(&self.split_fractions)?;
        Ok(())
    }
}
