use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentResult, ResultRow, RESULTS_FILE};
use crate::error::{Error, Result};

/// Mean and sample standard deviation over seeds for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: String,
    pub method: String,
    pub setting: String,
    pub rho: f64,
    pub task: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub rows: Vec<SummaryRow>,
    /// Human-readable descriptions of missing cells.
    pub gaps: Vec<String>,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

impl ReportSummary {
    pub fn get(&self, kind: &str, method: &str, setting: &str, rho: f64, task: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| {
            r.kind == kind && r.method == method && r.setting == setting && r.rho == rho && r.task == task && r.metric == metric
        })
    }
}

fn find_results(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err))).collect::<Result<_>>()?;
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_results(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == RESULTS_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

type Key = (String, String, String, u64, String, String);

fn key(r: &ResultRow) -> Key {
    (r.kind.clone(), r.method.clone(), r.setting.clone(), r.rho.to_bits(), r.task.clone(), r.metric.clone())
}

fn write_summary(path: &Path, rows: &[&SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    crate::binio::write(path, bytes)
}

/// Aggregates every `results.csv` below `dir` into `summary.csv` plus one
/// `summary_<kind>.csv` per experiment kind, all written to `dir`.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    let mut files = Vec::new();
    find_results(dir, &mut files)?;
    if files.is_empty() {
        return Err(Error::contract("report", format!("no {RESULTS_FILE} found under {}", dir.display())));
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(ExperimentResult::read_csv(f)?.rows);
    }

    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Vec<&ResultRow>> = HashMap::new();
    for r in &rows {
        let k = key(r);
        groups.entry(k.clone()).or_insert_with(|| {
            order.push(k);
            Vec::new()
        });
        groups.get_mut(&key(r)).expect("inserted").push(r);
    }

    let mut summary = Vec::with_capacity(order.len());
    for k in &order {
        let g = &groups[k];
        let n = g.len();
        let mean = g.iter().map(|r| r.value).sum::<f64>() / n as f64;
        let std = if n > 1 { (g.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        let r = g[0];
        summary.push(SummaryRow {
            kind: r.kind.clone(),
            method: r.method.clone(),
            setting: r.setting.clone(),
            rho: r.rho,
            task: r.task.clone(),
            metric: r.metric.clone(),
            mean,
            std,
            n,
        });
    }

    let gaps = find_gaps(&rows, &order, &groups);
    for g in &gaps {
        log::warn!("partial report: {g}");
    }

    let mut written = Vec::new();
    let all_path = dir.join("summary.csv");
    write_summary(&all_path, &summary.iter().collect::<Vec<_>>())?;
    written.push(all_path);
    let kinds: BTreeSet<&str> = summary.iter().map(|r| r.kind.as_str()).collect();
    for kind in kinds {
        let path = dir.join(format!("summary_{kind}.csv"));
        write_summary(&path, &summary.iter().filter(|r| r.kind == kind).collect::<Vec<_>>())?;
        written.push(path);
    }
    Ok(ReportSummary { rows: summary, gaps, files: written })
}

/// Cells with fewer seeds than their experiment kind, and (method/setting/
/// rho, task) combinations absent for a metric reported elsewhere in the
/// same kind.
fn find_gaps(rows: &[ResultRow], order: &[Key], groups: &HashMap<Key, Vec<&ResultRow>>) -> Vec<String> {
    let mut gaps = Vec::new();
    let mut seeds_by_kind: HashMap<&str, BTreeSet<u64>> = HashMap::new();
    for r in rows {
        seeds_by_kind.entry(r.kind.as_str()).or_default().insert(r.seed);
    }
    for k in order {
        let have: BTreeSet<u64> = groups[k].iter().map(|r| r.seed).collect();
        let missing: Vec<u64> = seeds_by_kind[k.0.as_str()].difference(&have).copied().collect();
        if !missing.is_empty() {
            gaps.push(format!("{}/{}/{}/rho={}/{}/{}: missing seeds {missing:?}", k.0, k.1, k.2, f64::from_bits(k.3), k.4, k.5));
        }
    }
    let mut configs: HashMap<(&str, &str), BTreeSet<(&str, &str, u64)>> = HashMap::new();
    let mut tasks: HashMap<(&str, &str), BTreeSet<&str>> = HashMap::new();
    for k in order {
        configs.entry((&k.0, &k.5)).or_default().insert((&k.1, &k.2, k.3));
        tasks.entry((&k.0, &k.5)).or_default().insert(&k.4);
    }
    let mut combos: Vec<_> = configs.keys().copied().collect();
    combos.sort();
    for (kind, metric) in combos {
        for &(method, setting, rho) in &configs[&(kind, metric)] {
            for &task in &tasks[&(kind, metric)] {
                let k: Key = (kind.into(), method.into(), setting.into(), rho, task.into(), metric.into());
                if !groups.contains_key(&k) {
                    gaps.push(format!("{kind}/{method}/{setting}/rho={}/{task}/{metric}: no results", f64::from_bits(rho)));
                }
            }
        }
    }
    gaps
}
