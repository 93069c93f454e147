//! Contrastive and classification objectives.
//!
//! Every loss has a tape form (`*_on_tape`) used in training and gradient
//! checks, and a plain form returning `f64` built on the same tape code.

mod contrastive;
mod pseudo;
mod weighting;
mod xent;

pub use contrastive::{
    mscon_condition_loss, mscon_condition_on_tape, simclr_loss, simclr_mask, simclr_on_tape, supcon_anchor_terms,
    supcon_loss, supcon_on_tape,
};
pub use pseudo::{anchor_pseudo_nll, pseudo_likelihood, pseudo_log_likelihood_on_tape};
pub use weighting::{fit_log_variances, mscon_total, mscon_total_on_tape, LossReport};
pub use xent::{multitask_xent_loss, xent_loss, xent_on_tape};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mask, Tensor};
use crate::error::{Error, Result};

/// Tolerance on `||v|| = 1` for projection rows fed to contrastive losses.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    Sum,
    /// Mean over anchors that have at least one positive.
    #[default]
    MeanOverAnchors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { temperature: 0.1, reduction: Reduction::MeanOverAnchors }
    }
}

impl LossConfig {
    pub fn sum(temperature: f64) -> Self {
        Self { temperature, reduction: Reduction::Sum }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::contract("LossConfig", format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// `(i, j)` is set iff `j != i` and rows `i` and `j` share a label.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveMask {
    mask: Arc<Mask>,
    counts: Vec<usize>,
}

impl PositiveMask {
    pub fn from_mask(mask: Mask) -> Result<Self> {
        if mask.rows() != mask.cols() {
            return Err(Error::contract("PositiveMask", "mask must be square"));
        }
        if (0..mask.rows()).any(|i| mask.get(i, i)) {
            return Err(Error::contract("PositiveMask", "an anchor cannot be its own positive"));
        }
        let counts = (0..mask.rows()).map(|i| mask.row_count(i)).collect();
        Ok(Self { mask: Arc::new(mask), counts })
    }

    pub fn mask(&self) -> &Arc<Mask> {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask.get(i, j)
    }

    /// `|P(i)|` for every anchor.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Anchors with no positives; they contribute nothing to any loss.
    pub fn empty_anchors(&self) -> Vec<usize> {
        self.counts.iter().enumerate().filter(|(_, &c)| c == 0).map(|(i, _)| i).collect()
    }

    pub fn positives(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.mask.row(i).iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }
}

pub fn build_positive_mask(labels: &[u32]) -> PositiveMask {
    let n = labels.len();
    PositiveMask::from_mask(Mask::from_fn(n, n, |i, j| i != j && labels[i] == labels[j])).expect("diagonal is clear")
}

/// One batch of `2N` augmented rows: per-task projections and labels, and
/// the source sample each row was augmented from.
#[derive(Debug, Clone)]
pub struct BatchView {
    pub projections: Vec<Tensor>,
    pub labels: Vec<Vec<u32>>,
    pub sources: Vec<usize>,
}

impl BatchView {
    pub fn validate(&self) -> Result<()> {
        let n = self.sources.len();
        if n % 2 != 0 {
            return Err(Error::contract("BatchView", format!("row count {n} is odd")));
        }
        if self.projections.len() != self.labels.len() {
            return Err(Error::contract("BatchView", "one projection matrix and label column per task"));
        }
        for (v, y) in self.projections.iter().zip(&self.labels) {
            if v.rows() != n || y.len() != n {
                return Err(Error::contract("BatchView", "every task must cover all rows"));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.sources[i] == self.sources[j] && self.labels.iter().any(|y| y[i] != y[j]) {
                    return Err(Error::contract("BatchView", format!("views {i} and {j} of one source disagree on labels")));
                }
            }
        }
        Ok(())
    }

    /// Per-task MSCon losses.
    pub fn condition_losses(&self, cfg: &LossConfig) -> Result<Vec<f64>> {
        self.validate()?;
        self.projections
            .iter()
            .zip(&self.labels)
            .map(|(v, y)| mscon_condition_loss(v, &build_positive_mask(y), cfg))
            .collect()
    }
}

pub(crate) fn check_unit_rows(op: &'static str, v: &Tensor) -> Result<()> {
    if v.shape().len() != 2 {
        return Err(Error::contract(op, "projections must be a matrix"));
    }
    for i in 0..v.rows() {
        let n = v.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::contract(op, format!("row {i} has norm {n}, expected 1")));
        }
    }
    Ok(())
}
