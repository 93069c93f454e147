use rayon::prelude::*;

use super::{sub_seed, ExperimentKind, ExperimentManifest, ExperimentResult, ResultRow};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::eval::{extract_embeddings, linear_probe, linear_probe_with_targets, ProbeConfig, ProbeResult};
use crate::model::ModelParams;
use crate::synth::{generate_dataset, CorruptionSpec, DatasetSpec, MultiSimDataset};
use crate::train::{train_with, Method, TrainConfig, TrainingLog};

/// Labels one cell's rows.
#[derive(Clone)]
struct Cell {
    kind: ExperimentKind,
    method: Method,
    setting: String,
    rho: f64,
    seed: u64,
}

impl Cell {
    fn row(&self, task: &str, metric: &str, value: f64) -> ResultRow {
        ResultRow {
            kind: self.kind.to_string(),
            method: self.method.to_string(),
            setting: self.setting.clone(),
            rho: self.rho,
            seed: self.seed,
            task: task.to_string(),
            metric: metric.to_string(),
            value,
        }
    }

    fn accuracy_rows(&self, task: &str, r: &ProbeResult) -> [ResultRow; 2] {
        [self.row(task, "top1", r.accuracy), self.row(task, "top1_std", r.std)]
    }
}

fn dataset_for(manifest: &ExperimentManifest, seed: u64) -> Result<MultiSimDataset> {
    generate_dataset(&DatasetSpec { seed: manifest.dataset.seed.wrapping_add(seed), ..manifest.dataset.clone() })
}

fn train_config(manifest: &ExperimentManifest, method: Method, seed: u64) -> TrainConfig {
    TrainConfig { method, seed, ..manifest.train.clone() }
}

fn probe_config(manifest: &ExperimentManifest, seed: u64) -> ProbeConfig {
    ProbeConfig { seed: sub_seed(seed, 3), ..manifest.probe.clone() }
}

/// [`train_with`] plus an audit of the held-out label columns: any read of
/// one during training (including from `on_epoch`) fails with
/// [`Error::OodLeak`].
pub fn train_audited(
    dataset: &MultiSimDataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &ModelParams) -> Result<()>,
) -> Result<(ModelParams, TrainingLog)> {
    let held_out = dataset.ood_columns();
    let before: Vec<usize> = held_out.clone().map(|c| dataset.label_reads(c)).collect();
    let out = train_with(dataset, cfg, on_epoch)?;
    for (c, b) in held_out.zip(before) {
        if dataset.label_reads(c) != b {
            return Err(Error::OodLeak(dataset.task_name(c).to_string()));
        }
    }
    Ok(out)
}

fn probe_columns(dataset: &MultiSimDataset, h: &Tensor, columns: impl Iterator<Item = usize>, probe: &ProbeConfig, cell: &Cell) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for c in columns {
        let r = linear_probe(h, dataset.labels(c), &dataset.split, dataset.num_classes(c), probe)?;
        rows.extend(cell.accuracy_rows(dataset.task_name(c), &r));
    }
    Ok(rows)
}

/// Runs `f` on every job, in parallel when `threads > 1`, keeping job order.
fn run_jobs<J: Sync>(jobs: &[J], threads: usize, f: impl Fn(&J) -> Result<Vec<ResultRow>> + Sync) -> Result<ExperimentResult> {
    let per_job: Vec<Vec<ResultRow>> = if threads <= 1 {
        jobs.iter().map(&f).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::contract("threads", e.to_string()))?;
        pool.install(|| jobs.par_iter().map(&f).collect::<Result<_>>())?
    };
    Ok(ExperimentResult { rows: per_job.into_iter().flatten().collect() })
}

fn check_kind(manifest: &ExperimentManifest, kind: ExperimentKind) -> Result<()> {
    if manifest.kind != kind {
        return Err(Error::contract("ExperimentManifest", format!("expected a {kind} manifest, got {}", manifest.kind)));
    }
    manifest.validate()
}

/// For each rho and seed, corrupts the designated task's training labels and
/// trains every method. Records learned `sigma_sq`/`weight` per training
/// task, in-domain probe accuracy on the corrupted task (fit on the corrupted
/// training labels, scored against clean test labels) and probe accuracy on
/// every held-out task.
pub fn run_corruption_sweep(manifest: &ExperimentManifest) -> Result<ExperimentResult> {
    check_kind(manifest, ExperimentKind::Corruption)?;
    let target = manifest.corrupt_index()?;
    let methods = manifest.resolved_methods();
    let mut jobs = Vec::new();
    for &rho in &manifest.rho {
        for &seed in &manifest.seeds {
            for &method in &methods {
                jobs.push(Cell { kind: ExperimentKind::Corruption, method, setting: String::new(), rho, seed });
            }
        }
    }
    run_jobs(&jobs, manifest.threads, |cell| {
        let clean = dataset_for(manifest, cell.seed)?;
        let data = clean.with_corrupted(&CorruptionSpec { task_index: target, rho: cell.rho, seed: sub_seed(cell.seed, 1) })?;
        let (params, _) = train_audited(&data, &train_config(manifest, cell.method, cell.seed), &mut |_, _| Ok(()))?;
        let mut rows = Vec::new();
        if params.num_tasks() == data.spec.num_training_tasks() {
            for (c, (s2, w)) in params.sigma_sq().into_iter().zip(params.weights()).enumerate() {
                rows.push(cell.row(data.task_name(c), "sigma_sq", s2));
                rows.push(cell.row(data.task_name(c), "weight", w));
            }
        }
        let h = extract_embeddings(&params, &data.inputs)?;
        let probe = probe_config(manifest, cell.seed);
        let k = data.num_classes(target);
        let r = linear_probe_with_targets(&h, data.labels(target), clean.labels(target), &data.split, k, &probe)?;
        rows.extend(cell.accuracy_rows(data.task_name(target), &r));
        rows.extend(probe_columns(&data, &h, data.ood_columns(), &probe, cell)?);
        Ok(rows)
    })
}

/// Trains every method and probes every training task.
pub fn run_indomain_table(manifest: &ExperimentManifest) -> Result<ExperimentResult> {
    check_kind(manifest, ExperimentKind::Indomain)?;
    let jobs = method_seed_jobs(manifest, ExperimentKind::Indomain);
    run_jobs(&jobs, manifest.threads, |cell| {
        let data = dataset_for(manifest, cell.seed)?;
        let (params, _) = train_audited(&data, &train_config(manifest, cell.method, cell.seed), &mut |_, _| Ok(()))?;
        let h = extract_embeddings(&params, &data.inputs)?;
        probe_columns(&data, &h, 0..data.spec.num_training_tasks(), &probe_config(manifest, cell.seed), cell)
    })
}

/// Trains on the training tasks only and probes every held-out task.
pub fn run_ood_eval(manifest: &ExperimentManifest) -> Result<ExperimentResult> {
    check_kind(manifest, ExperimentKind::Ood)?;
    let jobs = method_seed_jobs(manifest, ExperimentKind::Ood);
    run_jobs(&jobs, manifest.threads, |cell| {
        let data = dataset_for(manifest, cell.seed)?;
        let (params, _) = train_audited(&data, &train_config(manifest, cell.method, cell.seed), &mut |_, _| Ok(()))?;
        let h = extract_embeddings(&params, &data.inputs)?;
        probe_columns(&data, &h, data.ood_columns(), &probe_config(manifest, cell.seed), cell)
    })
}

fn method_seed_jobs(manifest: &ExperimentManifest, kind: ExperimentKind) -> Vec<Cell> {
    let mut jobs = Vec::new();
    for &seed in &manifest.seeds {
        for method in manifest.resolved_methods() {
            jobs.push(Cell { kind, method, setting: String::new(), rho: 0.0, seed });
        }
    }
    jobs
}

enum HparamJob {
    Temperature(Cell, f64),
    Epochs(Cell),
}

/// Temperature sweep at the manifest's epoch count (`setting = tau=<τ>`),
/// and an epoch sweep at the manifest's temperature (`setting =
/// epochs=<e>`). The epoch sweep trains once to the largest grid value and
/// probes the checkpoints at every grid epoch along the way.
pub fn run_hparam_sweep(manifest: &ExperimentManifest) -> Result<ExperimentResult> {
    check_kind(manifest, ExperimentKind::Hparams)?;
    let kind = ExperimentKind::Hparams;
    let mut jobs = Vec::new();
    for method in manifest.resolved_methods() {
        for &seed in &manifest.seeds {
            for &tau in &manifest.temperatures {
                jobs.push(HparamJob::Temperature(Cell { kind, method, setting: format!("tau={tau}"), rho: 0.0, seed }, tau));
            }
            if !manifest.epoch_grid.is_empty() {
                jobs.push(HparamJob::Epochs(Cell { kind, method, setting: String::new(), rho: 0.0, seed }));
            }
        }
    }
    run_jobs(&jobs, manifest.threads, |job| {
        match job {
            HparamJob::Temperature(cell, tau) => {
                let data = dataset_for(manifest, cell.seed)?;
                let cfg = TrainConfig { temperature: *tau, ..train_config(manifest, cell.method, cell.seed) };
                let (params, _) = train_audited(&data, &cfg, &mut |_, _| Ok(()))?;
                let h = extract_embeddings(&params, &data.inputs)?;
                probe_columns(&data, &h, 0..data.spec.num_training_tasks(), &probe_config(manifest, cell.seed), cell)
            }
            HparamJob::Epochs(cell) => {
                let data = dataset_for(manifest, cell.seed)?;
                let max_epochs = *manifest.epoch_grid.iter().max().expect("non-empty grid");
                let cfg = TrainConfig { epochs: max_epochs, ..train_config(manifest, cell.method, cell.seed) };
                let probe = probe_config(manifest, cell.seed);
                let mut rows = Vec::new();
                train_audited(&data, &cfg, &mut |epoch, params| {
                    if manifest.epoch_grid.contains(&epoch) {
                        let at = Cell { setting: format!("epochs={epoch}"), ..cell.clone() };
                        let h = extract_embeddings(params, &data.inputs)?;
                        rows.extend(probe_columns(&data, &h, 0..data.spec.num_training_tasks(), &probe, &at)?);
                    }
                    Ok(())
                })?;
                Ok(rows)
            }
        }
    })
}

/// Dispatches on `manifest.kind`.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<ExperimentResult> {
    match manifest.kind {
        ExperimentKind::Corruption => run_corruption_sweep(manifest),
        ExperimentKind::Indomain => run_indomain_table(manifest),
        ExperimentKind::Ood => run_ood_eval(manifest),
        ExperimentKind::Hparams => run_hparam_sweep(manifest),
    }
}
