use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.70, 0.10, 0.20];

/// Disjoint train/validation/test index lists covering `0..M`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn validate_fractions(fractions: &[f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::contract("split_dataset", format!("fractions must be positive and sum to 1, got {fractions:?}")));
    }
    Ok(())
}

/// Shuffled split with `floor(f * M)` validation and test rows; the
/// remainder goes to train.
pub fn split_dataset(num_samples: usize, fractions: [f64; 3], seed: u64) -> Result<SplitIndices> {
    validate_fractions(&fractions)?;
    let n_val = (fractions[1] * num_samples as f64).floor() as usize;
    let n_test = (fractions[2] * num_samples as f64).floor() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= num_samples {
        return Err(Error::contract("split_dataset", format!("{num_samples} samples cannot be split as {fractions:?}")));
    }
    let mut idx: Vec<usize> = (0..num_samples).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(num_samples - n_test);
    let val = idx.split_off(idx.len() - n_val);
    Ok(SplitIndices { train: idx, val, test })
}
