//! Experiment runners: result schema, held-out label audit, determinism and
//! reporting.

mod common;

use std::collections::BTreeSet;

use mscon::experiment::{
    report, run_corruption_sweep, run_experiment, run_hparam_sweep, run_indomain_table, run_ood_eval, train_audited,
    ExperimentKind, ExperimentManifest, ExperimentResult,
};
use mscon::synth::generate_dataset;
use mscon::train::{Architecture, Method, TrainConfig};
use mscon::Error;

fn tiny(kind: ExperimentKind) -> ExperimentManifest {
    let mut m = ExperimentManifest::for_kind(kind);
    m.seeds = vec![0, 1];
    m.rho = vec![0.0, 1.0];
    m.corrupt_task = "b".into();
    m.temperatures = vec![0.1, 0.5];
    m.epoch_grid = vec![1, 2];
    m.dataset = common::small_spec(300, 0);
    m.train.epochs = 2;
    m.train.batch_size = 32;
    m.train.architecture = Architecture { hidden_dims: vec![32], embedding_dim: 16, head_hidden_dim: 16, projection_dim: 8 };
    m.probe.probe_epochs = 3;
    m.probe.bootstrap_resamples = 20;
    m
}

fn distinct<'a>(r: &'a ExperimentResult, f: impl Fn(&'a mscon::experiment::ResultRow) -> String) -> BTreeSet<String> {
    r.rows.iter().map(f).collect()
}

#[test]
fn corruption_sweep_schema() {
    let m = tiny(ExperimentKind::Corruption);
    let r = run_corruption_sweep(&m).unwrap();
    // Per (rho, seed): the weighted and unweighted runs each record sigma_sq
    // and weight for 3 training tasks, then top1/top1_std on the corrupted
    // task and on the held-out task.
    assert_eq!(r.rows.len(), 2 * 2 * 2 * (3 * 2 + 2 + 2));
    assert!(r.rows.iter().all(|row| row.kind == "corruption"));
    assert_eq!(distinct(&r, |row| row.metric.clone()), ["sigma_sq", "top1", "top1_std", "weight"].map(String::from).into());
    let top1_tasks = r.rows.iter().filter(|row| row.metric == "top1").map(|row| row.task.as_str()).collect::<BTreeSet<_>>();
    assert_eq!(top1_tasks, ["b", "held"].into());
    for row in r.rows.iter().filter(|row| row.method == "mscon-unweighted" && row.metric == "sigma_sq") {
        assert_eq!(row.value, 1.0);
    }
    let mut keys = BTreeSet::new();
    for row in &r.rows {
        assert!(keys.insert((row.method.clone(), row.rho.to_bits(), row.seed, row.task.clone(), row.metric.clone())));
    }
}

#[test]
fn indomain_table_schema() {
    let m = tiny(ExperimentKind::Indomain);
    let r = run_indomain_table(&m).unwrap();
    let methods = m.resolved_methods();
    assert_eq!(methods.len(), 3 + 1 + 1 + 3 + 1);
    assert_eq!(r.rows.len(), 2 * methods.len() * 3 * 2);
    assert_eq!(distinct(&r, |row| row.task.clone()), ["a", "b", "c"].map(String::from).into());
}

#[test]
fn ood_eval_schema() {
    let m = tiny(ExperimentKind::Ood);
    let r = run_ood_eval(&m).unwrap();
    assert_eq!(r.rows.len(), 2 * 2 * 2);
    assert!(r.rows.iter().all(|row| row.kind == "ood" && row.task == "held"));
    assert_eq!(distinct(&r, |row| row.method.clone()), ["mscon-weighted", "xent-multitask"].map(String::from).into());
}

#[test]
fn hparam_sweep_schema() {
    let m = tiny(ExperimentKind::Hparams);
    let r = run_hparam_sweep(&m).unwrap();
    let top1: Vec<_> = r.rows.iter().filter(|row| row.metric == "top1").collect();
    // (2 temperatures + 2 grid epochs) x 2 seeds x 3 tasks.
    assert_eq!(top1.len(), 4 * 2 * 3);
    let settings: BTreeSet<&str> = top1.iter().map(|row| row.setting.as_str()).collect();
    assert_eq!(settings, ["epochs=1", "epochs=2", "tau=0.1", "tau=0.5"].into());
}

#[test]
fn runner_rejects_a_manifest_of_another_kind() {
    let m = tiny(ExperimentKind::Ood);
    assert!(matches!(run_corruption_sweep(&m), Err(Error::Contract { .. })));
}

#[test]
fn held_out_label_reads_during_training_are_caught() {
    let ds = generate_dataset(&common::small_spec(200, 0)).unwrap();
    let cfg = TrainConfig { method: Method::MsconWeighted, epochs: 1, batch_size: 32, ..TrainConfig::default() };
    assert!(train_audited(&ds, &cfg, &mut |_, _| Ok(())).is_ok());
    let held = ds.ood_columns().start;
    let leak = train_audited(&ds, &cfg, &mut |_, _| {
        let _ = ds.labels(held);
        Ok(())
    });
    assert!(matches!(leak, Err(Error::OodLeak(ref name)) if name == "held"), "{leak:?}");
    // Training-task columns may be read freely.
    assert!(train_audited(&ds, &cfg, &mut |_, _| { let _ = ds.labels(0); Ok(()) }).is_ok());
}

#[test]
fn reruns_and_thread_counts_give_identical_bytes() {
    for kind in ExperimentKind::ALL {
        let m = tiny(kind);
        let a = run_experiment(&m).unwrap().to_csv_string().unwrap();
        let b = run_experiment(&m).unwrap().to_csv_string().unwrap();
        let c = run_experiment(&ExperimentManifest { threads: 3, ..m.clone() }).unwrap().to_csv_string().unwrap();
        assert_eq!(a, b, "{kind}");
        assert_eq!(a, c, "{kind}");
    }
}

#[test]
fn saved_results_aggregate_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = tiny(ExperimentKind::Corruption);
    m.seeds = vec![0, 1, 2, 3, 4];
    m.rho = vec![0.0];
    let r = run_experiment(&m).unwrap();
    r.save(&dir.path().join("corruption"), &m).unwrap();
    let reloaded = ExperimentResult::read_csv(&dir.path().join("corruption/results.csv")).unwrap();
    assert_eq!(reloaded, r);
    assert_eq!(ExperimentManifest::load(&dir.path().join("corruption/manifest.toml")).unwrap(), m);

    let s = report(dir.path()).unwrap();
    assert!(s.gaps.is_empty(), "{:?}", s.gaps);
    assert!(s.rows.iter().all(|row| row.n == 5));
    // One summary row per (method, rho, task, metric).
    let mut keys = BTreeSet::new();
    for row in &s.rows {
        assert!(keys.insert((row.method.clone(), row.rho.to_bits(), row.task.clone(), row.metric.clone())));
    }
    assert_eq!(s.rows.len(), r.rows.len() / 5);
    assert!(dir.path().join("summary_corruption.csv").exists());
}
