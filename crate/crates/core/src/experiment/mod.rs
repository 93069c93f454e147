//! Experiment manifests, sweep runners, result CSVs and summary reports.

mod report;
mod runners;

pub use report::{report, ReportSummary, SummaryRow};
pub use runners::{run_corruption_sweep, run_experiment, run_hparam_sweep, run_indomain_table, run_ood_eval, train_audited};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ProbeConfig;
use crate::synth::DatasetSpec;
use crate::train::{Method, TrainConfig};

/// Epoch count used by the shipped desk-scale manifests.
pub const DESK_EPOCHS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Corruption,
    Indomain,
    Ood,
    Hparams,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] =
        [ExperimentKind::Corruption, ExperimentKind::Indomain, ExperimentKind::Ood, ExperimentKind::Hparams];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Corruption => "corruption",
            ExperimentKind::Indomain => "indomain",
            ExperimentKind::Ood => "ood",
            ExperimentKind::Hparams => "hparams",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::contract("ExperimentKind", format!("unknown experiment kind `{s}`")))
    }
}

/// Everything needed to reproduce one experiment. Each seed `s` drives the
/// dataset (`dataset.seed + s`), the model initialization, the corruption
/// draw and the probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentManifest {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    /// Methods to compare; empty selects the defaults for `kind`.
    pub methods: Vec<Method>,
    pub rho: Vec<f64>,
    /// Name of the training task whose labels are corrupted.
    pub corrupt_task: String,
    pub temperatures: Vec<f64>,
    pub epoch_grid: Vec<usize>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads for independent cells (1 runs everything in order).
    pub threads: usize,
    pub dataset: DatasetSpec,
    /// Base training configuration; the runner sets method, seed and, for
    /// temperature sweeps, the temperature per cell. Without a `[train]`
    /// section the epoch count is [`DESK_EPOCHS`]; fields omitted from a
    /// `[train]` section take [`TrainConfig::default`] values.
    pub train: TrainConfig,
    pub probe: ProbeConfig,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Corruption,
            seeds: (0..5).collect(),
            methods: Vec::new(),
            rho: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            corrupt_task: "closure".to_string(),
            temperatures: vec![0.05, 0.07, 0.1, 0.2, 0.5],
            epoch_grid: vec![25, 50, 100, 200],
            out_dir: None,
            threads: 1,
            dataset: DatasetSpec::default(),
            train: TrainConfig { epochs: DESK_EPOCHS, ..TrainConfig::default() },
            probe: ProbeConfig::default(),
        }
    }
}

impl ExperimentManifest {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&crate::binio::read_string(path)?)
    }

    /// Methods for this experiment, falling back to the defaults for its kind.
    pub fn resolved_methods(&self) -> Vec<Method> {
        if !self.methods.is_empty() {
            return self.methods.clone();
        }
        let c = self.dataset.num_training_tasks();
        match self.kind {
            ExperimentKind::Corruption => vec![Method::MsconWeighted, Method::MsconUnweighted],
            ExperimentKind::Indomain => {
                let mut m: Vec<Method> = (0..c).map(Method::XentSingle).collect();
                m.push(Method::XentMultitask);
                m.push(Method::Simclr);
                m.extend((0..c).map(Method::SupconSingle));
                m.push(Method::MsconWeighted);
                m
            }
            ExperimentKind::Ood => vec![Method::XentMultitask, Method::MsconWeighted],
            ExperimentKind::Hparams => vec![Method::MsconWeighted],
        }
    }

    pub fn corrupt_index(&self) -> Result<usize> {
        self.dataset
            .task_column(&self.corrupt_task)
            .filter(|&c| c < self.dataset.num_training_tasks())
            .ok_or_else(|| Error::contract("ExperimentManifest", format!("`{}` is not a training task", self.corrupt_task)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::contract("ExperimentManifest", d));
        self.dataset.validate()?;
        self.probe.validate()?;
        let c = self.dataset.num_training_tasks();
        for m in self.resolved_methods() {
            TrainConfig { method: m, ..self.train.clone() }.validate(c)?;
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        match self.kind {
            ExperimentKind::Corruption => {
                if self.rho.is_empty() || self.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return bad("rho grid must be non-empty with values in [0, 1]".into());
                }
                if c < 2 || self.dataset.ood_tasks.is_empty() {
                    return bad("corruption sweep needs >= 2 training tasks and >= 1 held-out task".into());
                }
                self.corrupt_index()?;
            }
            ExperimentKind::Ood => {
                if self.dataset.ood_tasks.is_empty() {
                    return bad("OOD evaluation needs a held-out task".into());
                }
            }
            ExperimentKind::Hparams => {
                if self.temperatures.is_empty() || self.temperatures.iter().any(|t| !(*t > 0.0)) {
                    return bad("temperature grid must be non-empty and positive".into());
                }
                if self.epoch_grid.contains(&0) {
                    return bad("epoch grid values must be >= 1".into());
                }
            }
            ExperimentKind::Indomain => {}
        }
        Ok(())
    }
}

/// One measurement. `setting` names the swept hyperparameter for
/// hyperparameter sweeps (`tau=0.1`, `epochs=50`) and is empty otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub kind: String,
    pub method: String,
    pub setting: String,
    pub rho: f64,
    pub seed: u64,
    pub task: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

/// File name used for results inside an experiment's output directory.
pub const RESULTS_FILE: &str = "results.csv";

impl ExperimentResult {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("results", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::binio::write(path, self.to_csv_string()?.as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }

    /// Values matching every given filter.
    pub fn select(&self, method: &str, setting: &str, rho: Option<f64>, task: &str, metric: &str) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.method == method
                    && r.setting == setting
                    && rho.is_none_or(|x| r.rho == x)
                    && r.task == task
                    && r.metric == metric
            })
            .collect()
    }

    /// Writes `results.csv` and the manifest that produced it to `dir`.
    pub fn save(&self, dir: &Path, manifest: &ExperimentManifest) -> Result<()> {
        crate::binio::create_dir(dir)?;
        crate::binio::write(&dir.join("manifest.toml"), manifest.to_toml()?)?;
        self.write_csv(&dir.join(RESULTS_FILE))
    }
}

/// Mixes a seed with a stream index (splitmix64 finalizer), giving
/// decorrelated seeds for the independent random draws of one cell.
pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
