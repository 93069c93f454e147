//! In-domain accuracy table: every method probed on every training task
//! (mean ± std over seeds).
//!
//! `cargo run --release --example indomain_table -- [config] [out_dir]`
//!
//! The default config is `configs/indomain.toml` (9 methods x 5 seeds, about
//! five minutes on one core).

use std::path::PathBuf;

use mscon::experiment::{report, run_indomain_table, ExperimentManifest};

fn main() -> mscon::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/indomain.toml")), PathBuf::from);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("mscon-indomain"), PathBuf::from);

    let m = ExperimentManifest::load(&config)?;
    let result = run_indomain_table(&m)?;
    result.save(&out, &m)?;
    let summary = report(&out)?;

    let tasks: Vec<&str> = m.dataset.training_tasks.iter().map(|t| t.name.as_str()).collect();
    println!("{:<18}{}", "method", tasks.iter().map(|t| format!("{t:>15}")).collect::<String>());
    for method in m.resolved_methods() {
        let method = method.to_string();
        let cells: String = tasks
            .iter()
            .map(|t| summary.get("indomain", &method, "", 0.0, t, "top1").map_or(format!("{:>15}", "-"), |r| format!("{:>9.3}±{:.3}", r.mean, r.std)))
            .collect();
        println!("{method:<18}{cells}");
    }
    println!("results in {}", out.display());
    Ok(())
}
