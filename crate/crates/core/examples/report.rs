//! Aggregates every `results.csv` under a directory into summary CSVs and
//! prints them, along with any cells missing seeds or tasks.
//!
//! `cargo run --release --example report -- <results_dir>`

use std::path::PathBuf;

use mscon::experiment::report;

fn main() -> mscon::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).expect("usage: report <results_dir>"));
    let summary = report(&dir)?;
    println!("{:<12} {:<18} {:<12} {:>5} {:<10} {:<9} {:>8} {:>8} {:>3}", "kind", "method", "setting", "rho", "task", "metric", "mean", "std", "n");
    for r in &summary.rows {
        println!(
            "{:<12} {:<18} {:<12} {:>5} {:<10} {:<9} {:>8.4} {:>8.4} {:>3}",
            r.kind, r.method, r.setting, r.rho, r.task, r.metric, r.mean, r.std, r.n
        );
    }
    for g in &summary.gaps {
        println!("gap: {g}");
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
