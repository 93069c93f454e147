//! Training loops, embeddings and linear probes.

mod common;

use common::{rng, small_spec};
use mscon::autodiff::{Tape, Tensor};
use mscon::eval::{bootstrap_std, extract_embeddings, linear_probe, ProbeConfig};
use mscon::losses::{build_positive_mask, mscon_condition_on_tape, LossConfig};
use mscon::model::Trainable;
use mscon::synth::{generate_dataset, CorruptionSpec, DatasetSpec, SplitIndices, TaskSpec};
use mscon::train::{init_model, train, Method, TrainConfig};
use mscon::Error;
use rand::Rng;

fn quick(method: Method, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { method, epochs, batch_size: 32, seed, ..TrainConfig::default() }
}

const ALL_METHODS: [Method; 6] = [
    Method::MsconWeighted,
    Method::MsconUnweighted,
    Method::SupconSingle(1),
    Method::Simclr,
    Method::XentSingle(0),
    Method::XentMultitask,
];

#[test]
fn unweighted_log_variances_stay_exactly_zero() {
    let ds = generate_dataset(&small_spec(600, 1)).unwrap();
    let (params, log) = train(&ds, &quick(Method::MsconUnweighted, 3, 0)).unwrap();
    assert!(params.log_var.iter().all(|&s| s == 0.0));
    assert!(log.rows.iter().all(|r| r.sigma_sq == 1.0 && r.weight == 1.0));
}

#[test]
fn weighted_log_variances_move() {
    let ds = generate_dataset(&small_spec(600, 1)).unwrap();
    let (params, _) = train(&ds, &quick(Method::MsconWeighted, 3, 0)).unwrap();
    assert!(params.log_var.iter().all(|&s| s != 0.0 && s.is_finite()));
}

#[test]
fn tiny_runs_reduce_the_objective() {
    let ds = generate_dataset(&small_spec(600, 2)).unwrap();
    for method in ALL_METHODS {
        let (_, log) = train(&ds, &quick(method, 10, 0)).unwrap();
        let totals = log.epoch_mean_totals();
        assert_eq!(totals.len(), 10);
        assert!(totals[9] < totals[0], "{method}: {totals:?}");
    }
}

#[test]
fn training_logs_are_bit_reproducible() {
    let ds = generate_dataset(&small_spec(400, 3)).unwrap();
    for method in ALL_METHODS {
        let cfg = quick(method, 2, 11);
        let (pa, la) = train(&ds, &cfg).unwrap();
        let (pb, lb) = train(&ds, &cfg).unwrap();
        assert_eq!(la.to_csv_string().unwrap(), lb.to_csv_string().unwrap(), "{method}");
        assert_eq!(pa.fingerprint(), pb.fingerprint(), "{method}");
    }
}

#[test]
fn weighted_and_unweighted_agree_at_step_zero() {
    let ds = generate_dataset(&small_spec(400, 4)).unwrap();
    let (_, w) = train(&ds, &quick(Method::MsconWeighted, 1, 5)).unwrap();
    let (_, u) = train(&ds, &quick(Method::MsconUnweighted, 1, 5)).unwrap();
    let step0 = |rows: &[mscon::train::LogRow]| rows.iter().filter(|r| r.step == 0).map(|r| r.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(step0(&w.rows), step0(&u.rows));
    assert_eq!(w.rows[0].total.to_bits(), u.rows[0].total.to_bits());
}

#[test]
fn single_task_mscon_is_supcon_bit_for_bit() {
    let spec = DatasetSpec { training_tasks: vec![TaskSpec::new("only", 4)], ..small_spec(400, 6) };
    let ds = generate_dataset(&spec).unwrap();
    let (pm, lm) = train(&ds, &quick(Method::MsconUnweighted, 2, 3)).unwrap();
    let (ps, ls) = train(&ds, &quick(Method::SupconSingle(0), 2, 3)).unwrap();
    assert_eq!(pm, ps);
    assert_eq!(lm.to_csv_string().unwrap(), ls.to_csv_string().unwrap());
}

#[test]
fn every_head_sends_gradient_into_the_encoder() {
    let ds = generate_dataset(&small_spec(200, 7)).unwrap();
    let params = init_model(&ds, &TrainConfig::default()).unwrap();
    let batch: Vec<usize> = ds.split.train[..16].to_vec();
    let x = ds.inputs.select_rows(&batch);
    for c in 0..params.num_tasks() {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, Trainable::ALL);
        let xv = tape.constant(x.clone());
        let h = bound.encode(&mut tape, xv).unwrap();
        let v = bound.project(&mut tape, h, c).unwrap();
        let y: Vec<u32> = batch.iter().map(|&i| ds.labels(c)[i]).collect();
        let l = mscon_condition_on_tape(&mut tape, v, &build_positive_mask(&y), &LossConfig::default()).unwrap();
        let grads = tape.backward(l).unwrap();
        let g = grads.get(bound.encoder[0].weight).unwrap();
        assert!(g.iter().any(|&v| v != 0.0), "head {c}");
    }
}

#[test]
fn corrupted_task_gets_the_largest_sigma_sq() {
    // Fully corrupted closure labels, default desk-scale data and epochs.
    let mut wins = 0;
    for seed in 0..5 {
        let ds = generate_dataset(&DatasetSpec { seed, ..DatasetSpec::default() }).unwrap();
        let bad = ds.spec.task_column("closure").unwrap();
        let ds = ds.with_corrupted(&CorruptionSpec { task_index: bad, rho: 1.0, seed: 100 + seed }).unwrap();
        let cfg = TrainConfig { epochs: mscon::experiment::DESK_EPOCHS, seed, ..TrainConfig::default() };
        let (params, _) = train(&ds, &cfg).unwrap();
        let s2 = params.sigma_sq();
        if (0..s2.len()).filter(|&c| c != bad).all(|c| s2[bad] > s2[c]) {
            wins += 1;
        }
    }
    assert!(wins >= 4, "corrupted task had the largest sigma_sq in {wins} of 5 seeds");
}

#[test]
fn empty_validation_split_is_rejected_for_xent() {
    let mut ds = generate_dataset(&small_spec(300, 0)).unwrap();
    let val = std::mem::take(&mut ds.split.val);
    ds.split.train.extend(val);
    assert!(matches!(train(&ds, &quick(Method::XentMultitask, 1, 0)), Err(Error::Contract { .. })));
    assert!(train(&ds, &quick(Method::MsconWeighted, 1, 0)).is_ok());
}

#[test]
fn embeddings_drop_the_heads() {
    let ds = generate_dataset(&small_spec(200, 0)).unwrap();
    let params = init_model(&ds, &TrainConfig::default()).unwrap();
    let h = extract_embeddings(&params, &ds.inputs).unwrap();
    assert_eq!(h.shape(), &[200, params.config.embedding_dim]);
    assert_ne!(params.config.embedding_dim, params.config.projection_dim);
    assert_eq!(extract_embeddings(&params, &ds.inputs).unwrap(), h);
}

fn split(m: usize) -> SplitIndices {
    let cut = m * 7 / 10;
    SplitIndices { train: (0..cut).collect(), val: vec![], test: (cut..m).collect() }
}

#[test]
fn probe_on_one_hot_embeddings_is_perfect() {
    let m = 400;
    let y: Vec<u32> = (0..m as u32).map(|i| (i * 7) % 5).collect();
    let e = Tensor::matrix(m, 5, (0..m * 5).map(|k| if (k % 5) as u32 == y[k / 5] { 1.0 } else { 0.0 }).collect()).unwrap();
    let r = linear_probe(&e, &y, &split(m), 5, &ProbeConfig::default()).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.std, 0.0);
}

#[test]
fn probe_on_unrelated_labels_is_at_chance() {
    let m = 8000;
    let mut r = rng(31);
    let e = common::gaussian(m, 8, &mut r);
    let y: Vec<u32> = (0..m).map(|_| r.random_range(0..4)).collect();
    let res = linear_probe(&e, &y, &split(m), 4, &ProbeConfig::default()).unwrap();
    let n = (m - m * 7 / 10) as f64;
    let se = (0.25 * 0.75 / n).sqrt();
    assert!((res.accuracy - 0.25).abs() < 3.0 * se, "accuracy {} se {se}", res.accuracy);
}

#[test]
fn supcon_on_noiseless_data_gives_a_near_perfect_probe() {
    let mut spec = DatasetSpec { num_samples: 2000, mixing_noise: 0.0, seed: 12, ..DatasetSpec::default() };
    for t in spec.training_tasks.iter_mut().chain(spec.ood_tasks.iter_mut()) {
        t.within_class_noise = 0.0;
    }
    let ds = generate_dataset(&spec).unwrap();
    let (params, _) = train(&ds, &TrainConfig { method: Method::SupconSingle(1), epochs: 10, ..TrainConfig::default() }).unwrap();
    let before = params.fingerprint();
    let h = extract_embeddings(&params, &ds.inputs).unwrap();
    let r = linear_probe(&h, ds.labels(1), &ds.split, ds.num_classes(1), &ProbeConfig::default()).unwrap();
    assert!(r.accuracy > 0.95, "accuracy {}", r.accuracy);
    assert_eq!(params.fingerprint(), before);
}

#[test]
fn bootstrap_std_matches_the_binomial_approximation() {
    let flags: Vec<bool> = (0..1000).map(|i| i % 5 != 0).collect();
    let want = (0.8f64 * 0.2 / 1000.0).sqrt();
    let got = bootstrap_std(&flags, 1000, 4).unwrap();
    assert!((got - want).abs() < 0.2 * want, "{got} vs {want}");
    assert_eq!(got, bootstrap_std(&flags, 1000, 4).unwrap());
}
