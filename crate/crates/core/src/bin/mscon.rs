//! Command-line runner for datasets, training, probes, sweeps and reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mscon::eval::{extract_embeddings, linear_probe};
use mscon::experiment::{report, run_experiment, ExperimentKind, ExperimentManifest, ExperimentResult, ResultRow};
use mscon::model::ModelParams;
use mscon::synth::{generate_dataset, MultiSimDataset};
use mscon::train::train;
use mscon::{Error, Result};

#[derive(Parser)]
#[command(name = "mscon", version, about = "Multi-similarity contrastive learning on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment manifest (TOML). Omitted sections use built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the manifest seed(s) with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent experiment cells.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the manifest's dataset and save it to --out.
    GenerateData(Common),
    /// Train the manifest's method; writes a checkpoint and a training log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory from generate-data (default: generate from the manifest).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Linear probe on a trained encoder; writes probe.csv.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Probe every label column instead of the manifest's target task.
        #[arg(long)]
        all_tasks: bool,
    },
    /// Label-corruption sweep over rho and seeds.
    SweepCorruption(Common),
    /// In-domain accuracy table for every method and training task.
    TableIndomain(Common),
    /// Held-out task accuracy for encoders trained on the training tasks.
    EvalOod(Common),
    /// Temperature and epoch sweeps.
    SweepHparams(Common),
    /// Aggregate every results.csv under --out into summary CSVs.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn manifest(common: &Common, kind: Option<ExperimentKind>) -> Result<ExperimentManifest> {
    let mut m = match &common.config {
        Some(p) => ExperimentManifest::load(p)?,
        None => ExperimentManifest::for_kind(kind.unwrap_or(ExperimentKind::Corruption)),
    };
    if let Some(kind) = kind {
        m.kind = kind;
    }
    if let Some(seed) = common.seed {
        // Sweeps derive per-cell seeds from `seeds`; single runs use the
        // section seeds directly.
        if kind.is_some() {
            m.seeds = vec![seed];
        } else {
            m.dataset.seed = seed;
            m.train.seed = seed;
            m.probe.seed = seed;
        }
    }
    if let Some(t) = common.threads {
        m.threads = t;
    }
    if let Some(out) = &common.out {
        m.out_dir = Some(out.clone());
    }
    Ok(m)
}

fn out_dir(m: &ExperimentManifest) -> Result<PathBuf> {
    m.out_dir.clone().ok_or_else(|| Error::Contract { op: "cli", detail: "--out (or out_dir in the manifest) is required".into() })
}

fn dataset(m: &ExperimentManifest, data: Option<&Path>) -> Result<MultiSimDataset> {
    match data {
        Some(dir) => MultiSimDataset::load(dir),
        None => generate_dataset(&m.dataset),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData(common) => {
            let m = manifest(&common, None)?;
            let out = out_dir(&m)?;
            let ds = generate_dataset(&m.dataset)?;
            ds.save(&out)?;
            println!("wrote {} samples x {} features to {}", ds.num_samples(), ds.input_dim(), out.display());
        }
        Command::Train { common, data } => {
            let m = manifest(&common, None)?;
            let out = out_dir(&m)?;
            let ds = dataset(&m, data.as_deref())?;
            let (params, log) = train(&ds, &m.train)?;
            params.save(&out.join("model"))?;
            log.write_csv(&out.join("training_log.csv"))?;
            println!("trained {} for {} epochs; checkpoint in {}", m.train.method, m.train.epochs, out.join("model").display());
            for r in log.last_step() {
                println!("  {:<12} loss {:.4}  sigma_sq {:.4}  weight {:.4}", r.task, r.loss, r.sigma_sq, r.weight);
            }
        }
        Command::Probe { common, model, data, all_tasks } => {
            let m = manifest(&common, None)?;
            let out = out_dir(&m)?;
            let ds = dataset(&m, data.as_deref())?;
            let params = ModelParams::load(&model)?;
            let h = extract_embeddings(&params, &ds.inputs)?;
            let columns: Vec<usize> = if all_tasks { (0..ds.num_columns()).collect() } else { vec![m.probe.target_task] };
            let mut rows = Vec::new();
            for c in columns {
                if c >= ds.num_columns() {
                    return Err(Error::Contract { op: "probe", detail: format!("target_task {c} out of range") });
                }
                let r = linear_probe(&h, ds.labels(c), &ds.split, ds.num_classes(c), &m.probe)?;
                println!("{:<12} top1 {:.4} ± {:.4}", ds.task_name(c), r.accuracy, r.std);
                for (metric, value) in [("top1", r.accuracy), ("top1_std", r.std)] {
                    rows.push(ResultRow {
                        kind: "probe".into(),
                        method: model.display().to_string(),
                        setting: String::new(),
                        rho: 0.0,
                        seed: m.probe.seed,
                        task: ds.task_name(c).to_string(),
                        metric: metric.into(),
                        value,
                    });
                }
            }
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.display().to_string(), source: e })?;
            ExperimentResult { rows }.write_csv(&out.join("probe.csv"))?;
        }
        Command::SweepCorruption(c) => experiment(&c, ExperimentKind::Corruption)?,
        Command::TableIndomain(c) => experiment(&c, ExperimentKind::Indomain)?,
        Command::EvalOod(c) => experiment(&c, ExperimentKind::Ood)?,
        Command::SweepHparams(c) => experiment(&c, ExperimentKind::Hparams)?,
        Command::Report { out } => {
            let summary = report(&out)?;
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            for g in &summary.gaps {
                println!("gap: {g}");
            }
        }
    }
    Ok(())
}

fn experiment(common: &Common, kind: ExperimentKind) -> Result<()> {
    let m = manifest(common, Some(kind))?;
    let out = out_dir(&m)?;
    let result = run_experiment(&m)?;
    result.save(&out, &m)?;
    println!("{kind}: {} rows written to {}", result.rows.len(), out.join("results.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Contract { .. }) { 2 } else { 1 })
        }
    }
}
