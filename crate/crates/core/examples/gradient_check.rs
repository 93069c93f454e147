//! Builds a small computation on the tape, runs reverse mode, and compares
//! the result with central finite differences.
//!
//! `cargo run --release --example gradient_check`

use mscon::autodiff::{grad_check, numeric_gradient, Tape, Tensor, Var};
use mscon::losses::{build_positive_mask, supcon_on_tape, LossConfig};
use mscon::Result;

/// SupCon on row-normalized inputs, so gradients pass through the
/// normalization as they do in training.
fn loss(tape: &mut Tape, x: Var) -> Result<Var> {
    let v = tape.row_normalize(x)?;
    let mask = build_positive_mask(&[0, 1, 0, 1, 2, 2]);
    supcon_on_tape(tape, v, &mask, &LossConfig::default())
}

fn main() -> Result<()> {
    let x = Tensor::matrix(6, 3, (0..18).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect())?;

    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let out = loss(&mut tape, leaf)?;
    println!("loss = {:.6} ({} tape nodes)", tape.value(out).item(), tape.len());
    let grads = tape.backward(out)?;
    let analytic = grads.get(leaf).expect("leaf receives a gradient");
    let numeric = numeric_gradient(&loss, &x, 1e-5)?;

    println!("{:>4} {:>14} {:>14}", "i", "reverse mode", "finite diff");
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate().take(6) {
        println!("{i:>4} {a:>14.8} {n:>14.8}");
    }
    println!("max relative error: {:.2e}", grad_check(loss, &x, 1e-5)?);
    Ok(())
}
