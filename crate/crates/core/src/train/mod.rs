//! Training loops for every method: weighted and unweighted MSCon,
//! single-similarity SupCon, SimCLR, and cross-entropy baselines.

mod contrastive;
mod log;
mod xent;

pub use contrastive::{train_contrastive, train_contrastive_with};
pub use log::{LogRow, TrainingLog};
pub use xent::train_xent;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{init_params, EncoderConfig, ModelParams};
use crate::synth::{augment_pair_with, MultiSimDataset};

/// Training objective. Task indices refer to training-task columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    MsconWeighted,
    MsconUnweighted,
    SupconSingle(usize),
    Simclr,
    XentSingle(usize),
    XentMultitask,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::MsconWeighted => write!(f, "mscon-weighted"),
            Method::MsconUnweighted => write!(f, "mscon-unweighted"),
            Method::SupconSingle(c) => write!(f, "supcon-single:{c}"),
            Method::Simclr => write!(f, "simclr"),
            Method::XentSingle(c) => write!(f, "xent-single:{c}"),
            Method::XentMultitask => write!(f, "xent-multitask"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the [`Display`](fmt::Display) form, e.g. `supcon-single:1`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::contract("Method", format!("unknown method `{s}`"));
        let (name, task) = match s.split_once(':') {
            Some((n, t)) => (n, Some(t.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (name, task) {
            ("mscon-weighted", None) => Ok(Method::MsconWeighted),
            ("mscon-unweighted", None) => Ok(Method::MsconUnweighted),
            ("supcon-single", Some(c)) => Ok(Method::SupconSingle(c)),
            ("simclr", None) => Ok(Method::Simclr),
            ("xent-single", Some(c)) => Ok(Method::XentSingle(c)),
            ("xent-multitask", None) => Ok(Method::XentMultitask),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl Method {
    pub fn is_contrastive(self) -> bool {
        !matches!(self, Method::XentSingle(_) | Method::XentMultitask)
    }

    pub fn is_weighted(self) -> bool {
        self == Method::MsconWeighted
    }

    /// Label columns the method reads during training.
    pub fn supervised_tasks(self, num_training_tasks: usize) -> Vec<usize> {
        match self {
            Method::MsconWeighted | Method::MsconUnweighted | Method::XentMultitask => (0..num_training_tasks).collect(),
            Method::SupconSingle(c) | Method::XentSingle(c) => vec![c],
            Method::Simclr => Vec::new(),
        }
    }

    /// Projection heads in the trained model (cross-entropy models have none).
    pub fn num_heads(self, num_training_tasks: usize) -> usize {
        match self {
            Method::MsconWeighted | Method::MsconUnweighted => num_training_tasks,
            Method::SupconSingle(_) | Method::Simclr => 1,
            Method::XentSingle(_) | Method::XentMultitask => 0,
        }
    }
}

/// Layer widths. Defaults match [`EncoderConfig::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub head_hidden_dim: usize,
    pub projection_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        let c = EncoderConfig::new(1, 0, 0);
        Self {
            hidden_dims: c.hidden_dims,
            embedding_dim: c.embedding_dim,
            head_hidden_dim: c.head_hidden_dim,
            projection_dim: c.projection_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate for contrastive methods.
    pub lr: f64,
    /// Learning rate for the cross-entropy baselines.
    pub xent_lr: f64,
    pub momentum: f64,
    pub temperature: f64,
    pub jitter_sigma: f64,
    pub seed: u64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::MsconWeighted,
            epochs: 200,
            batch_size: 64,
            lr: 0.05,
            xent_lr: 0.01,
            momentum: 0.9,
            temperature: 0.1,
            jitter_sigma: 0.05,
            seed: 0,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_training_tasks: usize) -> Result<()> {
        let bad = |detail: String| Err(Error::contract("TrainConfig", detail));
        if self.epochs == 0 || self.batch_size < 2 {
            return bad(format!("need epochs >= 1 and batch_size >= 2, got {} and {}", self.epochs, self.batch_size));
        }
        for (name, v) in [("lr", self.lr), ("xent_lr", self.xent_lr), ("temperature", self.temperature)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.jitter_sigma >= 0.0) || !self.jitter_sigma.is_finite() {
            return bad(format!("jitter_sigma must be >= 0, got {}", self.jitter_sigma));
        }
        if let Method::SupconSingle(c) | Method::XentSingle(c) = self.method {
            if c >= num_training_tasks {
                return bad(format!("{} names task {c}, but there are {num_training_tasks} training tasks", self.method));
            }
        }
        if num_training_tasks == 0 && self.method != Method::Simclr {
            return bad(format!("{} needs at least one training task", self.method));
        }
        Ok(())
    }

    pub fn encoder_config(&self, input_dim: usize, num_heads: usize) -> EncoderConfig {
        let a = &self.architecture;
        EncoderConfig {
            input_dim,
            hidden_dims: a.hidden_dims.clone(),
            embedding_dim: a.embedding_dim,
            head_hidden_dim: a.head_hidden_dim,
            projection_dim: a.projection_dim,
            num_tasks: num_heads,
            seed: self.seed,
        }
    }
}

/// Freshly initialized parameters shaped for `cfg.method` on `dataset`.
pub fn init_model(dataset: &MultiSimDataset, cfg: &TrainConfig) -> Result<ModelParams> {
    let c = dataset.spec.num_training_tasks();
    cfg.validate(c)?;
    init_params(&cfg.encoder_config(dataset.input_dim(), cfg.method.num_heads(c)))
}

/// Initializes and trains with the loop matching `cfg.method`.
pub fn train(dataset: &MultiSimDataset, cfg: &TrainConfig) -> Result<(ModelParams, TrainingLog)> {
    train_with(dataset, cfg, &mut |_, _| Ok(()))
}

/// [`train`] with a hook called after every epoch (1-based) with the current
/// parameters.
pub fn train_with(
    dataset: &MultiSimDataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &ModelParams) -> Result<()>,
) -> Result<(ModelParams, TrainingLog)> {
    if cfg.method.is_contrastive() {
        let params = init_model(dataset, cfg)?;
        train_contrastive_with(dataset, params, cfg, on_epoch)
    } else {
        xent::train_xent_with(dataset, cfg, on_epoch)
    }
}

/// Shuffling and jitter draw from their own stream so they are independent
/// of the initialization stream for the same seed.
fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Shuffled full batches of training indices; the remainder is dropped.
fn epoch_batches(train: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order = train.to_vec();
    order.shuffle(rng);
    order.chunks_exact(batch_size).map(<[usize]>::to_vec).collect()
}

/// `2N x d` batch: first views in rows `0..N`, second views in `N..2N`.
fn augmented_batch(inputs: &Tensor, batch: &[usize], jitter_sigma: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let (n, d) = (batch.len(), inputs.cols());
    let mut data = vec![0.0; 2 * n * d];
    for (r, &i) in batch.iter().enumerate() {
        let (a, b) = augment_pair_with(inputs.row(i), jitter_sigma, rng);
        data[r * d..(r + 1) * d].copy_from_slice(&a);
        data[(n + r) * d..(n + r + 1) * d].copy_from_slice(&b);
    }
    Tensor::matrix(2 * n, d, data)
}

fn check_batchable(dataset: &MultiSimDataset, cfg: &TrainConfig) -> Result<()> {
    if dataset.split.train.len() < cfg.batch_size {
        return Err(Error::contract(
            "train",
            format!("{} training rows cannot fill a batch of {}", dataset.split.train.len(), cfg.batch_size),
        ));
    }
    Ok(())
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::Divergence(m) => Error::Divergence(format!("step {step}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_strings_roundtrip() {
        for m in [
            Method::MsconWeighted,
            Method::MsconUnweighted,
            Method::SupconSingle(2),
            Method::Simclr,
            Method::XentSingle(0),
            Method::XentMultitask,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("supcon-single".parse::<Method>().is_err());
        assert!("simclr:1".parse::<Method>().is_err());
        assert!("mscon".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate(3).is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { batch_size: 1, ..ok.clone() },
            TrainConfig { lr: 0.0, ..ok.clone() },
            TrainConfig { temperature: -0.1, ..ok.clone() },
            TrainConfig { momentum: 1.0, ..ok.clone() },
            TrainConfig { jitter_sigma: f64::NAN, ..ok.clone() },
            TrainConfig { method: Method::SupconSingle(3), ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(3), Err(Error::Contract { .. })), "{bad:?}");
        }
    }

    #[test]
    fn batches_are_full_and_disjoint() {
        let train: Vec<usize> = (0..70).collect();
        let b = epoch_batches(&train, 16, &mut data_rng(1));
        assert_eq!(b.len(), 4);
        let mut seen: Vec<usize> = b.concat();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn views_are_stacked() {
        let x = Tensor::matrix(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = augmented_batch(&x, &[2, 0], 0.0, &mut data_rng(0)).unwrap();
        assert_eq!(b.data(), &[4.0, 5.0, 0.0, 1.0, 4.0, 5.0, 0.0, 1.0]);
    }
}
