use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `point`.
pub fn numeric_gradient<F>(f: &F, point: &Tensor, step: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |x: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let out = f(&mut tape, v)?;
        let y = tape.value(out).item();
        if !y.is_finite() {
            return Err(Error::degenerate("grad_check", "function is not finite at a perturbed point"));
        }
        Ok(y)
    };
    let mut grad = Vec::with_capacity(point.numel());
    for i in 0..point.numel() {
        let mut hi = point.clone();
        hi.data_mut()[i] += step;
        let mut lo = point.clone();
        lo.data_mut()[i] -= step;
        grad.push((eval(hi)? - eval(lo)?) / (2.0 * step));
    }
    Ok(grad)
}

/// Largest coordinate-wise `|analytic - numeric| / max(1, |analytic|)` for a
/// scalar-valued tape function.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::contract("grad_check", format!("step {step} outside [1e-7, 1e-3]")));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let out = f(&mut tape, x)?;
    let grads = tape.backward(out)?;
    let zeros = vec![0.0; point.numel()];
    let analytic = grads.get(x).unwrap_or(&zeros);
    let numeric = numeric_gradient(&f, point, step)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}
