use super::Real;
use crate::{Error, Result};

/// Adam moments in f64 (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        OptimState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn update<T: Real>(&mut self, params: &mut [T], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "optimizer sized for {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            if update != 0.0 {
                *p = T::lit(p.as_f64() - update);
            }
        }
        Ok(())
    }
}
