use std::sync::Arc;

use crate::autodiff::{Mask, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Mean over rows of `-log softmax(logits)[label]`.
pub fn xent_on_tape(tape: &mut Tape, logits: Var, labels: &[u32]) -> Result<Var> {
    let t = tape.value(logits);
    if t.shape().len() != 2 || t.rows() != labels.len() {
        return Err(Error::contract("xent_loss", format!("{} labels for logits of shape {:?}", labels.len(), t.shape())));
    }
    if !t.all_finite() {
        return Err(Error::contract("xent_loss", "logits must be finite"));
    }
    let k = t.cols();
    if let Some(bad) = labels.iter().find(|&&y| y as usize >= k) {
        return Err(Error::contract("xent_loss", format!("label {bad} outside [0, {k})")));
    }
    let lse = tape.log_sum_exp(logits, None)?;
    let onehot = Mask::from_fn(labels.len(), k, |i, j| labels[i] as usize == j);
    let picked = tape.masked_sum(logits, Arc::new(onehot))?;
    let nll = tape.sub(lse, picked)?;
    tape.reduce_mean(nll)
}

pub fn xent_loss(logits: &Tensor, labels: &[u32]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let out = xent_on_tape(&mut tape, l, labels)?;
    Ok(tape.value(out).item())
}

/// Sum of per-task cross-entropies.
pub fn multitask_xent_loss(logits: &[Tensor], labels: &[&[u32]]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::contract("xent_loss", "one label column per task head"));
    }
    logits.iter().zip(labels).map(|(l, y)| xent_loss(l, y)).sum()
}
