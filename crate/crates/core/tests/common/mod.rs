//! Helpers shared by the integration tests: independent loss oracles written
//! as plain loops, and random batch generators.

#![allow(dead_code)]

use mscon::autodiff::Tensor;
use mscon::synth::{DatasetSpec, TaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows x cols` with i.i.d. standard normal entries.
pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Gaussian rows scaled to unit length.
pub fn unit_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = gaussian(rows, cols, rng);
    for r in t.data_mut().chunks_mut(cols) {
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        r.iter_mut().for_each(|x| *x /= n);
    }
    t
}

pub fn labels(n: usize, k: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// Labels for `2N` rows where rows `r` and `r + N` are views of one source.
pub fn paired_labels(n: usize, k: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let half = labels(n, k, rng);
    half.iter().chain(&half).copied().collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Supervised contrastive loss from the definition: for each anchor `i`
/// with positives, average `-log(exp(s_ip) / Σ_{a != i} exp(s_ia))` over its
/// positives `p`, then average over those anchors.
pub fn oracle_supcon(v: &Tensor, same: impl Fn(usize, usize) -> bool, tau: f64) -> f64 {
    let n = v.rows();
    let mut total = 0.0;
    let mut anchors = 0;
    for i in 0..n {
        let mut denom = 0.0;
        for a in 0..n {
            if a != i {
                denom += (dot(v.row(i), v.row(a)) / tau).exp();
            }
        }
        let mut sum = 0.0;
        let mut count = 0;
        for p in 0..n {
            if p != i && same(i, p) {
                sum += -((dot(v.row(i), v.row(p)) / tau).exp() / denom).ln();
                count += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
            anchors += 1;
        }
    }
    if anchors == 0 {
        0.0
    } else {
        total / anchors as f64
    }
}

pub fn oracle_supcon_labels(v: &Tensor, labels: &[u32], tau: f64) -> f64 {
    oracle_supcon(v, |i, j| labels[i] == labels[j], tau)
}

/// Positives are the other views of the same source.
pub fn oracle_simclr(v: &Tensor, sources: &[usize], tau: f64) -> f64 {
    oracle_supcon(v, |i, j| sources[i] == sources[j], tau)
}

/// Per-anchor pseudo-likelihood NLL from the definition.
pub fn oracle_pseudo_nll(v: &Tensor, labels: &[u32], i: usize, tau: f64) -> Option<f64> {
    let n = v.rows();
    let mut denom = 0.0;
    let mut pos = 0.0;
    let mut count = 0;
    for a in 0..n {
        if a == i {
            continue;
        }
        let e = (dot(v.row(i), v.row(a)) / tau).exp();
        denom += e;
        if labels[a] == labels[i] {
            pos += e;
            count += 1;
        }
    }
    (count > 0).then(|| -(pos / count as f64 / denom).ln())
}

/// A small dataset that trains in well under a second per epoch.
pub fn small_spec(num_samples: usize, seed: u64) -> DatasetSpec {
    DatasetSpec {
        training_tasks: vec![TaskSpec::new("a", 3), TaskSpec::new("b", 4), TaskSpec::new("c", 3)],
        ood_tasks: vec![TaskSpec::new("held", 4)],
        num_samples,
        input_dim: 24,
        seed,
        ..DatasetSpec::default()
    }
}

pub mod grads {
    //! Finite-difference checks over every tape primitive and every loss.
    //! Each entry reports the worst relative error over 10 random points.

    use std::sync::Arc;

    use mscon::autodiff::{grad_check, Mask, Tape, Tensor, Var};
    use mscon::losses::{
        build_positive_mask, mscon_condition_on_tape, mscon_total_on_tape, pseudo_log_likelihood_on_tape, simclr_on_tape,
        supcon_on_tape, xent_on_tape, LossConfig,
    };
    use mscon::Result;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const STEP: f64 = 1e-5;
    pub const TOL: f64 = 1e-5;
    const POINTS: usize = 10;

    fn uniform(shape: [usize; 2], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::matrix(shape[0], shape[1], (0..shape[0] * shape[1]).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    /// Contracts an arbitrary-shaped output to a scalar with fixed random
    /// weights, so every output coordinate feeds the checked gradient.
    fn contract(tape: &mut Tape, y: Var) -> Result<Var> {
        let shape = tape.value(y).shape().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let n: usize = shape.iter().product();
        let w = tape.constant(Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let p = tape.mul(y, w)?;
        tape.reduce_sum(p)
    }

    fn worst(shape: [usize; 2], lo: f64, hi: f64, f: impl Fn(&mut Tape, Var) -> Result<Var>) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..POINTS)
            .map(|_| {
                let x = uniform(shape, lo, hi, &mut rng);
                grad_check(|t, v| { let y = f(t, v)?; contract(t, y) }, &x, STEP).unwrap()
            })
            .fold(0.0, f64::max)
    }

    pub fn primitive_errors() -> Vec<(&'static str, f64)> {
        let other = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let right = Tensor::matrix(4, 2, (0..8).map(|i| (i as f64 * 0.91).cos()).collect()).unwrap();
        let bias = Tensor::matrix(1, 4, vec![0.3, -0.2, 0.1, 0.5]).unwrap();
        let mask = Arc::new(Mask::from_fn(3, 4, |i, j| (i + j) % 3 != 0));
        let c = |t: &mut Tape, x: &Tensor| t.constant(x.clone());
        vec![
            ("add", worst([3, 4], -1.5, 1.5, |t, x| { let o = c(t, &other); t.add(x, o) })),
            ("add_row", worst([3, 4], -1.5, 1.5, |t, x| { let b = c(t, &bias); t.add(x, b) })),
            ("add_row_rhs", worst([1, 4], -1.5, 1.5, |t, b| { let o = c(t, &other); t.add(o, b) })),
            ("sub", worst([3, 4], -1.5, 1.5, |t, x| { let o = c(t, &other); t.sub(o, x) })),
            ("scalar_mul", worst([3, 4], -1.5, 1.5, |t, x| t.scalar_mul(x, -2.5))),
            ("mul", worst([3, 4], -1.5, 1.5, |t, x| { let o = c(t, &other); t.mul(x, o) })),
            ("mul_self", worst([3, 4], -1.5, 1.5, |t, x| t.mul(x, x))),
            ("mul_scalar_rhs", worst([1, 1], -1.5, 1.5, |t, k| { let o = c(t, &other); t.mul(o, k) })),
            ("matmul_lhs", worst([3, 4], -1.5, 1.5, |t, x| { let r = c(t, &right); t.matmul(x, r) })),
            ("matmul_rhs", worst([4, 2], -1.5, 1.5, |t, x| { let l = c(t, &other); t.matmul(l, x) })),
            ("matmul_gram", worst([3, 4], -1.5, 1.5, |t, x| { let xt = t.transpose(x)?; t.matmul(x, xt) })),
            ("relu", worst([3, 4], -1.5, 1.5, |t, x| t.relu(x))),
            ("exp", worst([3, 4], -1.5, 1.5, |t, x| t.exp(x))),
            ("log", worst([3, 4], 0.2, 3.0, |t, x| t.log(x))),
            ("row_normalize", worst([3, 4], -1.5, 1.5, |t, x| t.row_normalize(x))),
            ("log_sum_exp", worst([3, 4], -1.5, 1.5, |t, x| t.log_sum_exp(x, None))),
            ("log_sum_exp_masked", worst([3, 4], -1.5, 1.5, |t, x| t.log_sum_exp(x, Some(Arc::clone(&mask))))),
            ("masked_sum", worst([3, 4], -1.5, 1.5, |t, x| t.masked_sum(x, Arc::clone(&mask)))),
            ("reduce_sum", worst([3, 4], -1.5, 1.5, |t, x| t.reduce_sum(x))),
            ("reduce_mean", worst([3, 4], -1.5, 1.5, |t, x| t.reduce_mean(x))),
            ("transpose", worst([3, 4], -1.5, 1.5, |t, x| t.transpose(x))),
            ("concat_rows", worst([3, 4], -1.5, 1.5, |t, x| { let o = c(t, &other); t.concat_rows(&[o, x, x]) })),
        ]
    }

    /// Losses are checked with respect to unnormalized projections, so the
    /// row normalization feeding them is covered too.
    pub fn loss_errors() -> Vec<(&'static str, f64)> {
        let n = 8;
        let cfg = LossConfig { temperature: 0.5, ..LossConfig::default() };
        let labels_a: Vec<u32> = vec![0, 1, 2, 0, 0, 1, 2, 0];
        let labels_b: Vec<u32> = vec![1, 1, 0, 0, 1, 1, 0, 0];
        let (mask_a, mask_b) = (build_positive_mask(&labels_a), build_positive_mask(&labels_b));
        let sources: Vec<usize> = (0..n / 2).chain(0..n / 2).collect();
        let fixed_b = Tensor::matrix(n, 3, (0..n * 3).map(|i| (i as f64 * 0.61).sin() + 0.1).collect()).unwrap();
        let xent_labels: Vec<u32> = vec![0, 2, 1, 1, 0, 3];
        let ref_labels: Vec<u32> = vec![0, 1, 2, 0, 1, 2, 0, 1];
        let refs = Tensor::matrix(n, 3, (0..n * 3).map(|i| (i as f64 * 1.3).cos() + 0.05).collect()).unwrap();

        // Both conditions depend on the checked input: condition `a` directly,
        // condition `b` through a fixed linear map, so gradients mix.
        let mix = Tensor::matrix(3, 3, vec![0.9, 0.2, -0.1, 0.3, -0.7, 0.4, 0.1, 0.5, 0.8]).unwrap();
        let total = move |weighted: bool, log_var: [f64; 2]| {
            let (mask_a, mask_b, mix, fixed_b) = (mask_a.clone(), mask_b.clone(), mix.clone(), fixed_b.clone());
            move |t: &mut Tape, x: Var| {
                let va = t.row_normalize(x)?;
                let m = t.constant(mix.clone());
                let xb = t.matmul(x, m)?;
                let fb = t.constant(fixed_b.clone());
                let xb = t.add(xb, fb)?;
                let vb = t.row_normalize(xb)?;
                let la = mscon_condition_on_tape(t, va, &mask_a, &cfg)?;
                let lb = mscon_condition_on_tape(t, vb, &mask_b, &cfg)?;
                let s: Vec<Var> = log_var.iter().map(|&s| t.constant(Tensor::scalar(s))).collect();
                mscon_total_on_tape(t, &[la, lb], &s, weighted)
            }
        };
        // Gradient of the weighted total with respect to one log-variance.
        let total_wrt_s = |losses: [f64; 2], other_s: f64| {
            move |t: &mut Tape, s: Var| {
                let l: Vec<Var> = losses.iter().map(|&l| t.constant(Tensor::scalar(l))).collect();
                let s1 = t.constant(Tensor::scalar(other_s));
                mscon_total_on_tape(t, &l, &[s, s1], true)
            }
        };
        let mask_a2 = build_positive_mask(&labels_a);

        vec![
            ("supcon", worst([n, 3], -1.5, 1.5, |t, x| { let v = t.row_normalize(x)?; supcon_on_tape(t, v, &mask_a2, &cfg) })),
            ("simclr", worst([n, 3], -1.5, 1.5, |t, x| { let v = t.row_normalize(x)?; simclr_on_tape(t, v, &sources, &cfg) })),
            ("mscon_total_unweighted", worst([n, 3], -1.5, 1.5, total(false, [0.0, 0.0]))),
            ("mscon_total_weighted", worst([n, 3], -1.5, 1.5, total(true, [0.4, -0.8]))),
            ("mscon_total_weighted_log_var", worst([1, 1], -2.0, 2.0, total_wrt_s([1.7, 0.6], 0.3))),
            ("xent", worst([6, 4], -2.0, 2.0, |t, x| xent_on_tape(t, x, &xent_labels))),
            ("pseudo_likelihood_query", worst([1, 3], -1.5, 1.5, |t, x| {
                let q = t.row_normalize(x)?;
                let r = t.constant(refs.clone());
                let r = t.row_normalize(r)?;
                let s = t.constant(Tensor::scalar(-0.3));
                let lp = pseudo_log_likelihood_on_tape(t, q, None, r, &ref_labels, 3, 0.5, s)?;
                let pick = t.masked_sum(lp, Arc::new(Mask::from_fn(3, 1, |k, _| k == 1)))?;
                t.reduce_sum(pick)
            })),
            ("pseudo_likelihood_refs", worst([n, 3], -1.5, 1.5, |t, x| {
                let r = t.row_normalize(x)?;
                let q = t.constant(Tensor::matrix(1, 3, vec![0.6, 0.0, 0.8]).unwrap());
                let s = t.constant(Tensor::scalar(0.2));
                let lp = pseudo_log_likelihood_on_tape(t, q, None, r, &ref_labels, 3, 0.5, s)?;
                let pick = t.masked_sum(lp, Arc::new(Mask::from_fn(3, 1, |k, _| k == 2)))?;
                t.reduce_sum(pick)
            })),
            ("pseudo_likelihood_log_var", worst([1, 1], -1.0, 1.0, |t, s| {
                let r = t.constant(refs.clone());
                let r = t.row_normalize(r)?;
                let q = t.constant(Tensor::matrix(1, 3, vec![0.6, 0.0, 0.8]).unwrap());
                let lp = pseudo_log_likelihood_on_tape(t, q, None, r, &ref_labels, 3, 0.5, s)?;
                let pick = t.masked_sum(lp, Arc::new(Mask::from_fn(3, 1, |k, _| k == 0)))?;
                t.reduce_sum(pick)
            })),
        ]
    }
}

/// Largest `|vectorized - oracle|` over random batches (`2N <= 16`,
/// `d' <= 8`) for SupCon, every MSCon condition and SimCLR.
pub fn oracle_discrepancy(seed: u64, batches: usize) -> f64 {
    use mscon::losses::{build_positive_mask, simclr_loss, supcon_loss, BatchView, LossConfig};
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for batch in 0..batches {
        let n = r.random_range(1..=8usize);
        let d = r.random_range(2..=8usize);
        let tau = [0.05, 0.1, 0.5, 1.0][batch % 4];
        let cfg = LossConfig { temperature: tau, ..LossConfig::default() };
        let tasks = r.random_range(1..=3usize);
        let mut projections = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..tasks {
            projections.push(unit_rows(2 * n, d, &mut r));
            let k = r.random_range(1..=4u32);
            labels.push(paired_labels(n, k, &mut r));
        }
        let sources: Vec<usize> = (0..n).chain(0..n).collect();
        let view = BatchView { projections: projections.clone(), labels: labels.clone(), sources: sources.clone() };
        let conditions = view.condition_losses(&cfg).unwrap();
        for c in 0..tasks {
            let want = oracle_supcon_labels(&projections[c], &labels[c], tau);
            let sup = supcon_loss(&projections[c], &build_positive_mask(&labels[c]), &cfg).unwrap();
            worst = worst.max((sup - want).abs()).max((conditions[c] - want).abs());
        }
        let sim = simclr_loss(&projections[0], &sources, &cfg).unwrap();
        worst = worst.max((sim - oracle_simclr(&projections[0], &sources, tau)).abs());
    }
    worst
}

/// Over random batches, the largest `pseudo-likelihood NLL - SupCon term`
/// across anchors with positives (the bound holds when this is <= 0), and
/// the largest deviation of the pseudo-likelihood NLL from its oracle.
pub fn jensen_gap(seed: u64, batches: usize) -> (f64, f64) {
    use mscon::losses::{anchor_pseudo_nll, build_positive_mask, supcon_anchor_terms};
    let mut r = rng(seed);
    let (mut gap, mut oracle_err) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..batches {
        let n = r.random_range(2..=8usize);
        let d = r.random_range(2..=8usize);
        let tau = r.random_range(0.05..1.0);
        let v = unit_rows(2 * n, d, &mut r);
        let y = paired_labels(n, r.random_range(1..=4u32), &mut r);
        let mask = build_positive_mask(&y);
        for (i, term) in supcon_anchor_terms(&v, &mask, tau).unwrap().into_iter().enumerate() {
            let pl = anchor_pseudo_nll(&v, &mask, i, tau).unwrap();
            assert_eq!(pl.is_some(), term.is_some());
            if let (Some(pl), Some(term)) = (pl, term) {
                gap = gap.max(pl - term);
                oracle_err = oracle_err.max((pl - oracle_pseudo_nll(&v, &y, i, tau).unwrap()).abs());
            }
        }
    }
    (gap, oracle_err)
}
