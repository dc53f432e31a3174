use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(&t.shape)).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape != params.tensor(i).shape {
                return Err(Error::Shape(format!("gradient shape {:?} for `{}`", g.shape, params.name(i))));
            }
            if let Some(j) = g.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for `{}`[{j}] at Adam step {}",
                    params.name(i),
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = params.tensor_mut(i);
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g.data[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g.data[j] * g.data[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p.data[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.add("w", Tensor::scalar(v));
        p
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = one(0.3);
        let mut a = Adam::new(AdamConfig::with_lr(0.1), &p);
        for _ in 0..5 {
            a.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(p.tensor(0).item(), 0.3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one(0.0);
        let mut a = Adam::new(AdamConfig::with_lr(0.1), &p);
        a.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.tensor(0).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut p = one(0.0);
        let mut a = Adam::new(AdamConfig::with_lr(0.1), &p);
        let err = a.step(&mut p, &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert!(err.is_numeric());
        assert!(err.to_string().contains("`w`"));
        assert_eq!(a.step, 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = one(1.0);
            let mut a = Adam::new(AdamConfig::with_lr(0.01), &p);
            for k in 0..50 {
                let g = (p.tensor(0).item() - 0.2) * 2.0 + 0.01 * k as f64;
                a.step(&mut p, &[Tensor::scalar(g)]).unwrap();
            }
            p.tensor(0).item().to_bits()
        };
        assert_eq!(run(), run());
    }
}
