use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::{Error, Result};

/// Bias-corrected Adam optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    /// Fresh state for `n` parameters with lr 1e-3, betas (0.9, 0.999), eps 1e-8.
    pub fn new(n: usize) -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Applies one update of `params` along `grad`.
    pub fn step(&mut self, params: &mut ParamVector, grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state has {} entries, params {}, gradient {}",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((w, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::nn::LayerPartition;

    fn params(values: Vec<f64>) -> ParamVector {
        let part = Arc::new(LayerPartition::from_shapes(vec![(
            "w".into(),
            vec![values.len()],
        )]));
        ParamVector::from_values(part, values).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = params(vec![1.0, -2.0]);
        let before = p.clone();
        let mut opt = AdamState::new(2);
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn first_step_is_lr_against_gradient() {
        let mut p = params(vec![0.0, 0.0, 0.0]);
        let g = [0.5, -3.0, 1e-3];
        let mut opt = AdamState::new(3);
        opt.step(&mut p, &g).unwrap();
        for (w, g) in p.values().iter().zip(g) {
            let expect = 1e-3 * g.abs() / (g.abs() + 1e-8);
            assert!((w.abs() - expect).abs() < 1e-15);
            assert_eq!(w.signum(), -g.signum());
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = params(vec![0.0]);
        assert!(AdamState::new(2).step(&mut p, &[0.0, 0.0]).is_err());
    }
}
