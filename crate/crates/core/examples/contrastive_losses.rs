//! Evaluates every objective on one hand-built batch: SupCon, SimCLR, the
//! per-similarity MSCon losses, the weighted total, and the pseudo-likelihood.
//!
//! `cargo run --release --example contrastive_losses`

use mscon::autodiff::Tensor;
use mscon::losses::{
    build_positive_mask, fit_log_variances, mscon_total, pseudo_likelihood, simclr_loss, supcon_loss, BatchView, LossConfig,
};

fn unit(rows: &[[f64; 2]]) -> Tensor {
    let data = rows.iter().flat_map(|r| {
        let n = (r[0] * r[0] + r[1] * r[1]).sqrt();
        [r[0] / n, r[1] / n]
    });
    Tensor::matrix(rows.len(), 2, data.collect()).unwrap()
}

fn main() -> mscon::Result<()> {
    // Two views of three sources: rows 0..3 and 3..6.
    let sources = vec![0, 1, 2, 0, 1, 2];
    let shape = unit(&[[1.0, 0.1], [0.2, 1.0], [0.9, 0.3], [1.0, 0.0], [0.1, 1.0], [1.0, 0.2]]);
    let color = unit(&[[1.0, 0.0], [1.0, 0.1], [0.0, 1.0], [0.9, 0.1], [1.0, 0.2], [0.1, 1.0]]);
    let shape_labels = vec![0, 1, 0, 0, 1, 0];
    let color_labels = vec![0, 0, 1, 0, 0, 1];
    let cfg = LossConfig::default();

    println!("supcon (shape labels): {:.4}", supcon_loss(&shape, &build_positive_mask(&shape_labels), &cfg)?);
    println!("simclr (instance positives): {:.4}", simclr_loss(&shape, &sources, &cfg)?);

    let batch = BatchView { projections: vec![shape.clone(), color], labels: vec![shape_labels.clone(), color_labels], sources };
    let losses = batch.condition_losses(&cfg)?;
    println!("mscon per-similarity losses: {losses:.4?}");

    let unweighted = mscon_total(&losses, &[0.0, 0.0], false)?;
    println!("unweighted total: {:.4}", unweighted.total);
    let (s, steps) = fit_log_variances(&losses, 0.1, 2000, 1e-6)?;
    let weighted = mscon_total(&losses, &s, true)?;
    println!(
        "weighted total at the optimal sigma^2 ({steps} steps): {:.4}, sigma^2 {:.4?}, weights {:.4?}",
        weighted.total, weighted.sigma_sq, weighted.weights
    );

    for sigma_sq in [0.5, 1.0, 4.0] {
        let p = pseudo_likelihood(shape.row(0), Some(0), &shape, &shape_labels, 2, 0.1, sigma_sq)?;
        println!("pseudo-likelihood of row 0 over shape classes, sigma^2 = {sigma_sq}: {p:.4?}");
    }
    Ok(())
}
