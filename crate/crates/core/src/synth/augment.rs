use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Two independent jittered views `x + N(0, sigma^2 I)`.
pub fn augment_pair(x: &[f64], jitter_sigma: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    augment_pair_with(x, jitter_sigma, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn augment_pair_with<R: Rng + ?Sized>(x: &[f64], jitter_sigma: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let view = |rng: &mut R| -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let z: f64 = rng.sample(StandardNormal);
                v + jitter_sigma * z
            })
            .collect()
    };
    let a = view(rng);
    let b = view(rng);
    (a, b)
}
