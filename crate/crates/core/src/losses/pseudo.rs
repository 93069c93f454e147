use super::contrastive::{dot, log_sum_exp_excluding};
use super::{check_unit_rows, PositiveMask};
use crate::autodiff::{Mask, Tape, Tensor, Var};
use crate::error::{Error, Result};
use std::sync::Arc;

fn class_members(labels: &[u32], num_classes: usize, skip: Option<usize>) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); num_classes];
    for (j, &y) in labels.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        members
            .get_mut(y as usize)
            .ok_or_else(|| Error::contract("pseudo_likelihood", format!("label {y} outside [0, {num_classes})")))?
            .push(j);
    }
    if let Some(k) = members.iter().position(Vec::is_empty) {
        return Err(Error::degenerate("pseudo_likelihood", format!("class {k} has no reference points")));
    }
    Ok(members)
}

/// Class probabilities for one projection `v` under a similarity.
///
/// `score(y) = mean_{p in P_y} exp(v·v_p / (τ σ²))`, normalized over the
/// `num_classes` classes. When the query is itself one of the reference rows,
/// pass its index as `query_index` so it is left out of its own class.
pub fn pseudo_likelihood(
    v: &[f64],
    query_index: Option<usize>,
    refs: &Tensor,
    ref_labels: &[u32],
    num_classes: usize,
    temperature: f64,
    sigma_sq: f64,
) -> Result<Vec<f64>> {
    if !(sigma_sq > 0.0) || !(temperature > 0.0) {
        return Err(Error::contract("pseudo_likelihood", "temperature and sigma_sq must be positive"));
    }
    if refs.rows() != ref_labels.len() || refs.cols() != v.len() {
        return Err(Error::contract("pseudo_likelihood", "reference set does not match the query"));
    }
    let members = class_members(ref_labels, num_classes, query_index)?;
    let scale = temperature * sigma_sq;
    let log_scores: Vec<f64> = members
        .iter()
        .map(|idx| {
            let s: Vec<f64> = idx.iter().map(|&j| dot(v, refs.row(j)) / scale).collect();
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + (s.iter().map(|x| (x - max).exp()).sum::<f64>() / idx.len() as f64).ln()
        })
        .collect();
    let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_scores.iter().map(|x| (x - max).exp()).sum();
    Ok(log_scores.iter().map(|x| (x - max).exp() / z).collect())
}

/// Log class probabilities (`[K, 1]`) for a `[1, d']` query, differentiable in
/// the query, the references and `log_var` (`s = log σ²`, a `[1, 1]` node).
#[allow(clippy::too_many_arguments)]
pub fn pseudo_log_likelihood_on_tape(
    tape: &mut Tape,
    query: Var,
    query_index: Option<usize>,
    refs: Var,
    ref_labels: &[u32],
    num_classes: usize,
    temperature: f64,
    log_var: Var,
) -> Result<Var> {
    let members = class_members(ref_labels, num_classes, query_index)?;
    let n = ref_labels.len();
    let rt = tape.transpose(refs)?;
    let sim = tape.matmul(query, rt)?;
    let neg_s = tape.scalar_mul(log_var, -1.0)?;
    let inv_sigma_sq = tape.exp(neg_s)?;
    let scaled = tape.mul(sim, inv_sigma_sq)?;
    let scaled = tape.scalar_mul(scaled, 1.0 / temperature)?;
    let rows = vec![scaled; num_classes];
    let tiled = tape.concat_rows(&rows)?;
    let mask = Mask::from_fn(num_classes, n, |k, j| Some(j) != query_index && ref_labels[j] as usize == k);
    let lse = tape.log_sum_exp(tiled, Some(Arc::new(mask)))?;
    let log_counts = tape.constant(Tensor::matrix(num_classes, 1, members.iter().map(|m| -(m.len() as f64).ln()).collect())?);
    let log_scores = tape.add(lse, log_counts)?;
    let as_row = tape.transpose(log_scores)?;
    let log_z = tape.log_sum_exp(as_row, None)?;
    tape.sub(log_scores, log_z)
}

/// `-log[ mean_{p in P(i)} exp(s_ip) / Σ_{a != i} exp(s_ia) ]` for anchor `i`:
/// the in-batch pseudo-likelihood counterpart of the anchor's SupCon term.
/// By Jensen's inequality it never exceeds that term.
pub fn anchor_pseudo_nll(v: &Tensor, mask: &PositiveMask, anchor: usize, temperature: f64) -> Result<Option<f64>> {
    check_unit_rows("anchor_pseudo_nll", v)?;
    let count = mask.counts()[anchor];
    if count == 0 {
        return Ok(None);
    }
    let s: Vec<f64> = (0..v.rows()).map(|j| dot(v.row(anchor), v.row(j)) / temperature).collect();
    let pos: Vec<f64> = mask.positives(anchor).map(|p| s[p]).collect();
    let max = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_mean = max + (pos.iter().map(|x| (x - max).exp()).sum::<f64>() / count as f64).ln();
    Ok(Some(log_sum_exp_excluding(&s, anchor) - log_mean))
}
