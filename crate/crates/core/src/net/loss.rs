//! Imitation loss: squared action error plus an L2 term on dense weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossParams {
    /// Weight of the angular-velocity error.
    pub lambda: f64,
    /// L2 coefficient for dense-layer weights.
    pub gamma: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { lambda: 1.0, gamma: 1e-7 }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::OutOfRange { what: "lambda", value: self.lambda });
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::OutOfRange { what: "gamma", value: self.gamma });
        }
        Ok(())
    }
}

/// `|v - v_ref|^2 + lambda |w - w_ref|^2 + gamma * dense_sq_sum` for one sample.
pub fn loss(a: [f64; 2], a_ref: [f64; 2], dense_sq_sum: f64, lp: &LossParams) -> f64 {
    (a[0] - a_ref[0]).powi(2) + lp.lambda * (a[1] - a_ref[1]).powi(2) + lp.gamma * dense_sq_sum
}

/// Batch-mean prediction loss over `[n, 2]` outputs and its gradient with
/// respect to the outputs.
pub fn prediction_loss<T: Scalar>(outputs: &[T], targets: &[T], lambda: f64) -> (f64, Vec<T>) {
    let n = outputs.len() / 2;
    let scale = 1.0 / n.max(1) as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(outputs.len());
    for (o, t) in outputs.chunks_exact(2).zip(targets.chunks_exact(2)) {
        let dv = o[0].to_f64_lossy() - t[0].to_f64_lossy();
        let dw = o[1].to_f64_lossy() - t[1].to_f64_lossy();
        total += dv * dv + lambda * dw * dw;
        grad.push(T::from_f64_lossy(2.0 * dv * scale));
        grad.push(T::from_f64_lossy(2.0 * lambda * dw * scale));
    }
    (total * scale, grad)
}
