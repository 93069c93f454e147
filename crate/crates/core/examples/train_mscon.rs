//! Trains weighted MSCon on the default synthetic dataset, then probes every
//! task (training and held-out) on the frozen encoder.
//!
//! `cargo run --release --example train_mscon -- [epochs] [seed] [method]`
//!
//! `method` is one of `mscon-weighted` (default), `mscon-unweighted`,
//! `supcon-single:<task>`, `simclr`, `xent-single:<task>`, `xent-multitask`.

use std::time::Instant;

use mscon::eval::{extract_embeddings, linear_probe, ProbeConfig};
use mscon::synth::{generate_dataset, DatasetSpec};
use mscon::train::{train, Method, TrainConfig};

fn main() -> mscon::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(10, |a| a.parse().expect("epochs"));
    let seed = args.next().map_or(0, |a| a.parse().expect("seed"));
    let method: Method = args.next().map_or(Ok(Method::MsconWeighted), |a| a.parse())?;

    let dataset = generate_dataset(&DatasetSpec { seed, ..DatasetSpec::default() })?;
    let cfg = TrainConfig { method, epochs, seed, ..TrainConfig::default() };
    let start = Instant::now();
    let (params, log) = train(&dataset, &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let steps = log.last_step().first().map_or(0, |r| r.step + 1);
    println!("{method}: {epochs} epochs, {steps} steps in {secs:.1}s ({:.1} ms/step)", 1e3 * secs / steps as f64);

    let totals = log.epoch_mean_totals();
    println!("mean objective: first epoch {:.4}, last epoch {:.4}", totals[0], totals[totals.len() - 1]);
    for r in log.last_step() {
        println!("  {:<10} loss {:.4}  sigma^2 {:.4}  weight {:.4}", r.task, r.loss, r.sigma_sq, r.weight);
    }

    let h = extract_embeddings(&params, &dataset.inputs)?;
    let probe = ProbeConfig { seed, ..ProbeConfig::default() };
    for c in 0..dataset.num_columns() {
        let r = linear_probe(&h, dataset.labels(c), &dataset.split, dataset.num_classes(c), &probe)?;
        println!("  probe {:<10} top-1 {:.4} ± {:.4} (chance {:.3})", dataset.task_name(c), r.accuracy, r.std, 1.0 / dataset.num_classes(c) as f64);
    }
    Ok(())
}
