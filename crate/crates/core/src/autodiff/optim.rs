use crate::error::{Error, Result};

/// A named, mutable parameter block handed to an optimizer, together with
/// its gradient (`None` for frozen blocks).
pub struct ParamRef<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: Option<&'a [f64]>,
}

/// Heavy-ball SGD: `v <- momentum * v + g; w <- w - lr * v`.
///
/// Velocity buffers are keyed by position in the parameter list and are
/// created zeroed on first use.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    lr: f64,
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::contract("sgd_momentum_step", format!("lr must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::contract("sgd_momentum_step", format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(Self { lr, momentum, velocity: Vec::new() })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies one update. Gradients are validated before any parameter moves,
    /// so a divergence error leaves the parameters untouched.
    pub fn step(&mut self, params: &mut [ParamRef<'_>]) -> Result<()> {
        for p in params.iter() {
            if let Some(g) = p.grad {
                if g.len() != p.value.len() {
                    return Err(Error::contract("sgd_momentum_step", format!("gradient for {} has wrong length", p.name)));
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Divergence(format!("non-finite gradient for parameter {}", p.name)));
                }
            }
        }
        if self.velocity.len() < params.len() {
            self.velocity.resize(params.len(), Vec::new());
        }
        for (p, v) in params.iter_mut().zip(self.velocity.iter_mut()) {
            let Some(g) = p.grad else { continue };
            if v.len() != p.value.len() {
                *v = vec![0.0; p.value.len()];
            }
            for ((w, vi), gi) in p.value.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = self.momentum * *vi + gi;
                *w -= self.lr * *vi;
            }
        }
        Ok(())
    }
}
