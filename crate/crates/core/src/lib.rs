//! Multi-similarity contrastive learning on synthetic multi-task data.
//!
//! A shared encoder feeds one projection head per similarity (task). Each
//! head is trained with a supervised contrastive loss over its own positives,
//! and each similarity carries a learned log-variance that scales its loss
//! and temperature, letting the objective down-weight noisy similarities.
//!
//! Modules, bottom-up:
//!
//! - [`autodiff`]: tape-based reverse-mode differentiation and SGD with momentum
//! - [`synth`]: synthetic datasets, label corruption, augmentation, splits
//! - [`model`]: encoder, projection heads, log-variances, checkpoints
//! - [`losses`]: SupCon, per-similarity and weighted MSCon, SimCLR, cross-entropy, pseudo-likelihood
//! - [`train`]: training loops for every method
//! - [`eval`]: linear probes, top-1 accuracy, bootstrap standard deviation
//! - [`experiment`]: manifests, sweeps, result CSVs, reports

pub mod autodiff;
mod binio;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod losses;
pub mod model;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
