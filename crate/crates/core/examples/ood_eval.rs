//! Held-out task evaluation: encoders trained on the training tasks only,
//! probed on a task whose labels never reach the training losses.
//!
//! `cargo run --release --example ood_eval -- [config] [out_dir]`
//!
//! The default config is `configs/ood.toml`.

use std::path::PathBuf;

use mscon::experiment::{report, run_ood_eval, ExperimentManifest};

fn main() -> mscon::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/ood.toml")), PathBuf::from);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("mscon-ood"), PathBuf::from);

    let m = ExperimentManifest::load(&config)?;
    // Training reads of a held-out label column abort the run with an error.
    let result = run_ood_eval(&m)?;
    result.save(&out, &m)?;
    let summary = report(&out)?;

    for t in &m.dataset.ood_tasks {
        println!("{} (chance {:.3})", t.name, 1.0 / t.num_classes as f64);
        for method in m.resolved_methods() {
            if let Some(r) = summary.get("ood", &method.to_string(), "", 0.0, &t.name, "top1") {
                println!("  {:<16} {:.3} ± {:.3} over {} seeds", method.to_string(), r.mean, r.std, r.n);
            }
        }
    }
    println!("results in {}", out.display());
    Ok(())
}
