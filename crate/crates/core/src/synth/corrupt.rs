use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub task_index: usize,
    pub rho: f64,
    pub seed: u64,
}

/// With probability `rho` each label is redrawn uniformly from all `K`
/// classes (possibly landing on the original); otherwise it is kept.
///
/// The expected fraction of unchanged labels is `1 - rho * (1 - 1/K)`.
pub fn corrupt_labels(labels: &[u32], num_classes: usize, spec: &CorruptionSpec) -> Result<Vec<u32>> {
    if !(0.0..=1.0).contains(&spec.rho) {
        return Err(Error::contract("corrupt_labels", format!("rho must be in [0, 1], got {}", spec.rho)));
    }
    if let Some(bad) = labels.iter().find(|&&y| y as usize >= num_classes) {
        return Err(Error::contract("corrupt_labels", format!("label {bad} outside [0, {num_classes})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(labels
        .iter()
        .map(|&y| {
            // Both draws happen for every sample so the stream does not depend on rho.
            let flip = rng.random::<f64>() < spec.rho;
            let fresh = rng.random_range(0..num_classes as u32);
            if flip {
                fresh
            } else {
                y
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(m: usize, k: u32) -> Vec<u32> {
        (0..m as u32).map(|i| i % k).collect()
    }

    #[test]
    fn rho_zero_is_identity() {
        let y = column(500, 5);
        let spec = CorruptionSpec { task_index: 0, rho: 0.0, seed: 3 };
        assert_eq!(corrupt_labels(&y, 5, &spec).unwrap(), y);
    }

    #[test]
    fn rho_one_is_uniform() {
        let (m, k) = (10_000, 5usize);
        let y = vec![0u32; m];
        let out = corrupt_labels(&y, k, &CorruptionSpec { task_index: 0, rho: 1.0, seed: 11 }).unwrap();
        let p = 1.0 / k as f64;
        let se = (p * (1.0 - p) / m as f64).sqrt();
        for c in 0..k as u32 {
            let freq = out.iter().filter(|&&v| v == c).count() as f64 / m as f64;
            assert!((freq - p).abs() < 3.0 * se, "class {c}: {freq}");
        }
    }

    #[test]
    fn half_corruption_match_fraction() {
        let m = 10_000;
        let y = column(m, 5);
        let out = corrupt_labels(&y, 5, &CorruptionSpec { task_index: 0, rho: 0.5, seed: 5 }).unwrap();
        let matched = y.iter().zip(&out).filter(|(a, b)| a == b).count() as f64 / m as f64;
        let p = 1.0 - 0.5 * (4.0 / 5.0);
        let se = (p * (1.0 - p) / m as f64).sqrt();
        assert!((matched - p).abs() < 3.0 * se, "matched {matched}");
    }

    #[test]
    fn rejects_out_of_range() {
        let spec = CorruptionSpec { task_index: 0, rho: 1.5, seed: 0 };
        assert!(corrupt_labels(&[0, 1], 2, &spec).is_err());
        let spec = CorruptionSpec { task_index: 0, rho: 0.5, seed: 0 };
        assert!(corrupt_labels(&[0, 2], 2, &spec).is_err());
    }
}
