use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One task's entry for one optimizer step. `sigma_sq` and `weight` are the
/// values used in that step's objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub task: String,
    pub loss: f64,
    pub sigma_sq: f64,
    pub weight: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("training log", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::binio::write(path, self.to_csv_string()?.as_bytes())
    }

    /// Mean objective per epoch, in epoch order.
    pub fn epoch_mean_totals(&self) -> Vec<f64> {
        let mut sums: Vec<(usize, f64, usize)> = Vec::new();
        let mut last_step = None;
        for r in &self.rows {
            if last_step == Some(r.step) {
                continue;
            }
            last_step = Some(r.step);
            match sums.last_mut() {
                Some((e, s, n)) if *e == r.epoch => {
                    *s += r.total;
                    *n += 1;
                }
                _ => sums.push((r.epoch, r.total, 1)),
            }
        }
        sums.into_iter().map(|(_, s, n)| s / n as f64).collect()
    }

    /// Rows of the final step.
    pub fn last_step(&self) -> &[LogRow] {
        let Some(last) = self.rows.last() else { return &[] };
        let start = self.rows.iter().rposition(|r| r.step != last.step).map_or(0, |i| i + 1);
        &self.rows[start..]
    }
}
