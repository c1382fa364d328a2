use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub params: AdamParams,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: AdamParams, len: usize) -> Self {
        Self { params, step: 0, m: vec![T::zero(); len], v: vec![T::zero(); len] }
    }

    pub fn update(&mut self, theta: &mut [T], grad: &[T]) {
        assert_eq!(theta.len(), grad.len());
        assert_eq!(theta.len(), self.m.len());
        self.step += 1;
        let p = self.params;
        let b1 = T::from_f64_lossy(p.beta1);
        let b2 = T::from_f64_lossy(p.beta2);
        let one = T::one();
        let c1 = T::from_f64_lossy(1.0 - p.beta1.powi(self.step as i32));
        let c2 = T::from_f64_lossy(1.0 - p.beta2.powi(self.step as i32));
        let lr = T::from_f64_lossy(p.lr);
        let eps = T::from_f64_lossy(p.eps);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut theta = vec![0.5f32, -1.0, 2.0];
        let before = theta.clone();
        let mut adam = Adam::new(AdamParams::default(), 3);
        adam.update(&mut theta, &[0.0; 3]);
        assert_eq!(theta, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first step exactly lr * sign(g)
        let mut theta = vec![1.0f64, 1.0];
        let mut adam = Adam::new(AdamParams { lr: 0.01, ..AdamParams::default() }, 2);
        adam.update(&mut theta, &[3.0, -0.5]);
        assert!((theta[0] - 0.99).abs() < 1e-8);
        assert!((theta[1] - 1.01).abs() < 1e-8);
    }
}
