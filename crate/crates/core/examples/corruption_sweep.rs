//! Label-corruption sweep: weighted vs unweighted MSCon as one task's
//! training labels are resampled with probability rho. Prints the learned
//! sigma^2 of the corrupted task and probe accuracies per rho (mean ± std
//! over seeds).
//!
//! `cargo run --release --example corruption_sweep -- [config] [out_dir]`
//!
//! The default config is `configs/corruption.toml` (5 seeds x 6 rho values,
//! about six minutes on one core).

use std::path::PathBuf;

use mscon::experiment::{report, run_corruption_sweep, ExperimentManifest};

fn main() -> mscon::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/corruption.toml")), PathBuf::from);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("mscon-corruption"), PathBuf::from);

    let m = ExperimentManifest::load(&config)?;
    let result = run_corruption_sweep(&m)?;
    result.save(&out, &m)?;
    let summary = report(&out)?;

    let task = &m.corrupt_task;
    let ood = &m.dataset.ood_tasks[0].name;
    let cell = |method: &str, rho: f64, t: &str, metric: &str| {
        summary.get("corruption", method, "", rho, t, metric).map_or("-".to_string(), |r| format!("{:.3}±{:.3}", r.mean, r.std))
    };
    println!("{:>5} {:>13} | {:>13} {:>13} | {:>13} {:>13}", "rho", "sigma^2", "in-dom w", "in-dom u", "ood w", "ood u");
    for &rho in &m.rho {
        println!(
            "{rho:>5} {:>13} | {:>13} {:>13} | {:>13} {:>13}",
            cell("mscon-weighted", rho, task, "sigma_sq"),
            cell("mscon-weighted", rho, task, "top1"),
            cell("mscon-unweighted", rho, task, "top1"),
            cell("mscon-weighted", rho, ood, "top1"),
            cell("mscon-unweighted", rho, ood, "top1"),
        );
    }
    println!("results in {}", out.display());
    Ok(())
}
