use crate::autodiff::{ParamRef, SgdMomentum, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Per-similarity breakdown of one evaluation of the MSCon objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub losses: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    pub weights: Vec<f64>,
    pub total: f64,
}

fn report(losses: &[f64], log_var: &[f64], total: f64) -> LossReport {
    LossReport {
        losses: losses.to_vec(),
        sigma_sq: log_var.iter().map(|s| s.exp()).collect(),
        weights: log_var.iter().map(|s| (-s).exp()).collect(),
        total,
    }
}

/// Weighted: `Σ_c exp(-s_c) L_c + s_c`. Unweighted: `Σ_c L_c`, with every
/// `s_c` treated as 0.
pub fn mscon_total(losses: &[f64], log_var: &[f64], weighted: bool) -> Result<LossReport> {
    if losses.len() != log_var.len() {
        return Err(Error::contract("mscon_total", "one log-variance per condition"));
    }
    if weighted {
        let total = losses.iter().zip(log_var).map(|(l, s)| (-s).exp() * l + s).sum();
        Ok(report(losses, log_var, total))
    } else {
        Ok(report(losses, &vec![0.0; losses.len()], losses.iter().sum()))
    }
}

/// Tape form of [`mscon_total`]. Gradients flow through both the weight
/// `exp(-s_c)` and the condition loss `L_c`.
pub fn mscon_total_on_tape(tape: &mut Tape, losses: &[Var], log_var: &[Var], weighted: bool) -> Result<Var> {
    if losses.is_empty() {
        return Err(Error::contract("mscon_total", "no conditions"));
    }
    if weighted && losses.len() != log_var.len() {
        return Err(Error::contract("mscon_total", "one log-variance per condition"));
    }
    let mut total: Option<Var> = None;
    for (c, &l) in losses.iter().enumerate() {
        let term = if weighted {
            let s = log_var[c];
            let neg = tape.scalar_mul(s, -1.0)?;
            let w = tape.exp(neg)?;
            let wl = tape.mul(w, l)?;
            tape.add(wl, s)?
        } else {
            l
        };
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
    }
    Ok(total.expect("non-empty"))
}

/// Minimizes the weighted objective over the log-variances alone, holding
/// the condition losses fixed. Stops once every `|exp(s_c) - L_c| < tol`.
/// Returns the fitted `s` and the number of steps taken.
pub fn fit_log_variances(losses: &[f64], lr: f64, max_steps: usize, tol: f64) -> Result<(Vec<f64>, usize)> {
    if losses.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::contract("fit_log_variances", "condition losses must be positive"));
    }
    let mut s = vec![0.0; losses.len()];
    let mut opt = SgdMomentum::new(lr, 0.0)?;
    let done = |s: &[f64]| s.iter().zip(losses).all(|(s, l)| (s.exp() - l).abs() < tol);
    for step in 0..max_steps {
        if done(&s) {
            return Ok((s, step));
        }
        let mut tape = Tape::new();
        let ls: Vec<Var> = losses.iter().map(|&l| tape.constant(Tensor::scalar(l))).collect();
        let ss: Vec<Var> = s.iter().map(|&v| tape.leaf(Tensor::scalar(v))).collect();
        let total = mscon_total_on_tape(&mut tape, &ls, &ss, true)?;
        let mut grads = tape.backward(total)?;
        let g: Vec<Option<Vec<f64>>> = ss.iter().map(|&v| grads.take(v)).collect();
        let mut refs: Vec<ParamRef<'_>> = s
            .iter_mut()
            .zip(&g)
            .enumerate()
            .map(|(c, (v, g))| ParamRef { name: format!("log_var.{c}"), value: std::slice::from_mut(v), grad: g.as_deref() })
            .collect();
        opt.step(&mut refs)?;
    }
    let steps = if done(&s) { max_steps } else { max_steps + 1 };
    Ok((s, steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_log_var_matches_unweighted() {
        let l = [1.3, 0.2, 4.0];
        let w = mscon_total(&l, &[0.0; 3], true).unwrap();
        let u = mscon_total(&l, &[0.0; 3], false).unwrap();
        assert_eq!(w.total, u.total);
        assert_eq!(w.weights, vec![1.0; 3]);
    }

    #[test]
    fn unweighted_is_additive() {
        let u = mscon_total(&[0.7; 4], &[0.3; 4], false).unwrap();
        assert_eq!(u.total, 4.0 * 0.7);
        assert_eq!(u.sigma_sq, vec![1.0; 4]);
    }

    #[test]
    fn report_total_identity() {
        let r = mscon_total(&[2.0, 0.5], &[0.3, -0.2], true).unwrap();
        let manual: f64 = r.losses.iter().zip(&r.weights).zip(&r.sigma_sq).map(|((l, w), s2)| w * l + s2.ln()).sum();
        assert!((r.total - manual).abs() < 1e-12);
    }

    #[test]
    fn stationary_point_is_sigma_sq_equals_loss() {
        let l = [2.0, 0.5];
        let opt = [2f64.ln(), 0.5f64.ln()];
        let r = mscon_total(&l, &opt, true).unwrap();
        assert!((r.total - 2.0).abs() < 1e-12);
        // Any perturbation increases the objective.
        for d in [-0.1, 0.1] {
            assert!(mscon_total(&l, &[opt[0] + d, opt[1]], true).unwrap().total > r.total);
            assert!(mscon_total(&l, &[opt[0], opt[1] + d], true).unwrap().total > r.total);
        }
    }

    #[test]
    fn tape_matches_plain() {
        let mut tape = Tape::new();
        let ls: Vec<Var> = [2.0, 0.5].iter().map(|&l| tape.constant(Tensor::scalar(l))).collect();
        let ss: Vec<Var> = [0.1, -0.4].iter().map(|&s| tape.leaf(Tensor::scalar(s))).collect();
        let t = mscon_total_on_tape(&mut tape, &ls, &ss, true).unwrap();
        let plain = mscon_total(&[2.0, 0.5], &[0.1, -0.4], true).unwrap().total;
        assert!((tape.value(t).item() - plain).abs() < 1e-15);
        let g = tape.backward(t).unwrap();
        // d/ds (e^{-s} L + s) = 1 - e^{-s} L
        assert!((g.get(ss[0]).unwrap()[0] - (1.0 - (-0.1f64).exp() * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn fitting_log_variances_converges_and_orders_weights() {
        let l = [2.0, 0.5, 1.0];
        let (s, steps) = fit_log_variances(&l, 0.1, 2000, 1e-3).unwrap();
        assert!(steps <= 2000);
        for (s, l) in s.iter().zip(&l) {
            assert!((s.exp() - l).abs() < 1e-3);
        }
        let w: Vec<f64> = s.iter().map(|s| (-s).exp()).collect();
        assert!(w[0] < w[2] && w[2] < w[1]);
    }
}
