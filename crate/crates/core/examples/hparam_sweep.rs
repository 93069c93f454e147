//! Temperature and training-length sweeps for weighted MSCon, probed on
//! every training task (mean ± std over seeds).
//!
//! `cargo run --release --example hparam_sweep -- [config] [out_dir]`
//!
//! The default config is `configs/hparams.toml`. Its epoch grid trains each
//! seed to 200 epochs, so expect about ten minutes on one core.

use std::path::PathBuf;

use mscon::experiment::{report, run_hparam_sweep, ExperimentManifest};

fn main() -> mscon::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/hparams.toml")), PathBuf::from);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("mscon-hparams"), PathBuf::from);

    let m = ExperimentManifest::load(&config)?;
    let result = run_hparam_sweep(&m)?;
    result.save(&out, &m)?;
    let summary = report(&out)?;

    let method = m.resolved_methods()[0].to_string();
    let tasks: Vec<&str> = m.dataset.training_tasks.iter().map(|t| t.name.as_str()).collect();
    let settings = m.temperatures.iter().map(|t| format!("tau={t}")).chain(m.epoch_grid.iter().map(|e| format!("epochs={e}")));
    println!("{:<12}{}", "setting", tasks.iter().map(|t| format!("{t:>15}")).collect::<String>());
    for setting in settings {
        let cells: String = tasks
            .iter()
            .map(|t| summary.get("hparams", &method, &setting, 0.0, t, "top1").map_or(format!("{:>15}", "-"), |r| format!("{:>9.3}±{:.3}", r.mean, r.std)))
            .collect();
        println!("{setting:<12}{cells}");
    }
    println!("results in {}", out.display());
    Ok(())
}
