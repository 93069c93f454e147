use std::sync::Arc;

use super::{check_unit_rows, LossConfig, PositiveMask, Reduction};
use crate::autodiff::{Mask, Tape, Tensor, Var};
use crate::error::Result;

/// Supervised contrastive loss over the rows of `v` (unit-norm, `2N x d'`).
///
/// For every anchor `i` with `|P(i)| > 0`:
/// `-(1/|P(i)|) Σ_p [ s_ip - log Σ_{a != i} exp(s_ia) ]` with `s = v vᵀ / τ`.
/// Anchors without positives contribute zero and are left out of the mean.
pub fn supcon_on_tape(tape: &mut Tape, v: Var, mask: &PositiveMask, cfg: &LossConfig) -> Result<Var> {
    cfg.validate()?;
    check_unit_rows("supcon_loss", tape.value(v))?;
    let n = tape.value(v).rows();
    if mask.len() != n {
        return Err(crate::error::Error::contract(
            "supcon_loss",
            format!("mask covers {} rows, projections have {n}", mask.len()),
        ));
    }
    let vt = tape.transpose(v)?;
    let sim = tape.matmul(v, vt)?;
    let logits = tape.scalar_mul(sim, 1.0 / cfg.temperature)?;
    let lse = tape.log_sum_exp(logits, Some(Arc::new(Mask::off_diagonal(n))))?;
    let pos = tape.masked_sum(logits, Arc::clone(mask.mask()))?;

    let counts = mask.counts();
    let active: Vec<f64> = counts.iter().map(|&c| if c > 0 { 1.0 } else { 0.0 }).collect();
    let inv: Vec<f64> = counts.iter().map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 }).collect();
    let num_active = active.iter().sum::<f64>();
    let active = tape.constant(Tensor::matrix(n, 1, active)?);
    let inv = tape.constant(Tensor::matrix(n, 1, inv)?);

    let lse = tape.mul(lse, active)?;
    let pos = tape.mul(pos, inv)?;
    let per_anchor = tape.sub(lse, pos)?;
    let total = tape.reduce_sum(per_anchor)?;
    match cfg.reduction {
        Reduction::Sum => Ok(total),
        Reduction::MeanOverAnchors => tape.scalar_mul(total, if num_active > 0.0 { 1.0 / num_active } else { 0.0 }),
    }
}

fn eval(v: &Tensor, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(v.clone());
    let out = f(&mut tape, x)?;
    Ok(tape.value(out).item())
}

pub fn supcon_loss(v: &Tensor, mask: &PositiveMask, cfg: &LossConfig) -> Result<f64> {
    eval(v, |t, x| supcon_on_tape(t, x, mask, cfg))
}

/// Per-similarity loss: SupCon restricted to the positives of one condition.
pub fn mscon_condition_on_tape(tape: &mut Tape, v: Var, mask: &PositiveMask, cfg: &LossConfig) -> Result<Var> {
    supcon_on_tape(tape, v, mask, cfg)
}

pub fn mscon_condition_loss(v: &Tensor, mask: &PositiveMask, cfg: &LossConfig) -> Result<f64> {
    eval(v, |t, x| mscon_condition_on_tape(t, x, mask, cfg))
}

/// Positives are exactly the other views of the same source.
pub fn simclr_mask(sources: &[usize]) -> PositiveMask {
    let n = sources.len();
    PositiveMask::from_mask(Mask::from_fn(n, n, |i, j| i != j && sources[i] == sources[j])).expect("diagonal is clear")
}

pub fn simclr_on_tape(tape: &mut Tape, v: Var, sources: &[usize], cfg: &LossConfig) -> Result<Var> {
    supcon_on_tape(tape, v, &simclr_mask(sources), cfg)
}

pub fn simclr_loss(v: &Tensor, sources: &[usize], cfg: &LossConfig) -> Result<f64> {
    eval(v, |t, x| simclr_on_tape(t, x, sources, cfg))
}

/// Per-anchor SupCon terms `-(1/|P|) Σ_p log softmax_{A(i)}(s_i)_p`;
/// `None` for anchors without positives.
pub fn supcon_anchor_terms(v: &Tensor, mask: &PositiveMask, temperature: f64) -> Result<Vec<Option<f64>>> {
    check_unit_rows("supcon_anchor_terms", v)?;
    let n = v.rows();
    Ok((0..n)
        .map(|i| {
            if mask.counts()[i] == 0 {
                return None;
            }
            let s: Vec<f64> = (0..n).map(|j| dot(v.row(i), v.row(j)) / temperature).collect();
            let lse = log_sum_exp_excluding(&s, i);
            let total: f64 = mask.positives(i).map(|p| lse - s[p]).sum();
            Some(total / mask.counts()[i] as f64)
        })
        .collect())
}

pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(super) fn log_sum_exp_excluding(s: &[f64], skip: usize) -> f64 {
    let max = s.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, &x)| x).fold(f64::NEG_INFINITY, f64::max);
    max + s.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, &x)| (x - max).exp()).sum::<f64>().ln()
}
