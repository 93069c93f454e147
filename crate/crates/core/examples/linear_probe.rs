//! Compares linear-probe accuracy on raw inputs, on a randomly initialized
//! encoder, and on an encoder trained with weighted MSCon.
//!
//! `cargo run --release --example linear_probe -- [epochs]`

use mscon::autodiff::Tensor;
use mscon::eval::{extract_embeddings, linear_probe, ProbeConfig};
use mscon::synth::{generate_dataset, DatasetSpec, MultiSimDataset};
use mscon::train::{init_model, train, TrainConfig};

fn probe_all(name: &str, features: &Tensor, ds: &MultiSimDataset) -> mscon::Result<()> {
    let cfg = ProbeConfig::default();
    let mut line = format!("{name:<16}");
    for c in 0..ds.num_columns() {
        let r = linear_probe(features, ds.labels(c), &ds.split, ds.num_classes(c), &cfg)?;
        line += &format!(" {:>8.3} ±{:.3}", r.accuracy, r.std);
    }
    println!("{line}");
    Ok(())
}

fn main() -> mscon::Result<()> {
    let epochs = std::env::args().nth(1).map_or(mscon::experiment::DESK_EPOCHS, |a| a.parse().expect("epochs"));
    let ds = generate_dataset(&DatasetSpec::default())?;
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };

    let header: String = (0..ds.num_columns()).map(|c| format!(" {:>15}", ds.task_name(c))).collect();
    println!("{:<16}{header}", "features");
    probe_all("raw inputs", &ds.inputs, &ds)?;
    probe_all("random encoder", &extract_embeddings(&init_model(&ds, &cfg)?, &ds.inputs)?, &ds)?;
    let (params, _) = train(&ds, &cfg)?;
    probe_all("mscon-weighted", &extract_embeddings(&params, &ds.inputs)?, &ds)?;
    Ok(())
}
