//! Adam with bias correction, keyed by parameter name.

use std::collections::BTreeMap;

use super::store::ParamStore;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "learning rate must be positive, got {}",
                lr
            )));
        }
        Ok(AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        })
    }

    /// One in-place update over every `(name, grad)` pair. Parameters not
    /// named in `grads` are untouched; moment buffers are created lazily.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let t = params.get_mut(name).ok_or_else(|| {
                CoreError::Training(format!("gradient for unknown parameter '{}'", name))
            })?;
            if t.numel() != grad.len() {
                return Err(CoreError::shape(
                    "adam_step",
                    format!("'{}': param {} vs grad {}", name, t.numel(), grad.len()),
                ));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let data = t.data_mut();
            for i in 0..grad.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    fn one_param_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(v));
        s
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut store = one_param_store(1.5);
        let mut adam = AdamState::new(0.1).unwrap();
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![0.0]);
        adam.step(&mut store, &grads).unwrap();
        assert_eq!(store.get("w").unwrap().data()[0], 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Hand-computed: m̂ = g, v̂ = g², so the bias-corrected step is
        // lr·g/(|g|+ε) ≈ lr for g = 1.
        let mut store = one_param_store(0.0);
        let mut adam = AdamState::new(0.1).unwrap();
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![1.0]);
        adam.step(&mut store, &grads).unwrap();
        let w = store.get("w").unwrap().data()[0];
        assert!((w + 0.1).abs() < 1e-6, "w = {}", w);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut store = ParamStore::new();
        store.insert(
            "w",
            Tensor::new(vec![1, 4], vec![0.5, -0.35, 0.15, 0.45]).unwrap(),
        );
        let mut adam = AdamState::new(1e-2).unwrap();
        for _ in 0..200 {
            let g: Vec<f64> = store.get("w").unwrap().data().iter().map(|w| 2.0 * w).collect();
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), g);
            adam.step(&mut store, &grads).unwrap();
        }
        let norm = store.get("w").unwrap().l2_norm();
        assert!(norm < 1e-2, "‖w‖ = {}", norm);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut store = one_param_store(0.0);
        let mut adam = AdamState::new(0.1).unwrap();
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![1.0, 2.0]);
        assert!(adam.step(&mut store, &grads).is_err());
    }
}
