use crate::error::{Error, Result};
use crate::model::{NamedTensor, OptimizerSnapshot};
use crate::nn::{ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-9,
        }
    }
}

/// Adam with bias correction; no weight decay, no clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, p) in store.iter_mut().enumerate() {
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            let grad = p.grad.data();
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grad();
    }

    pub fn snapshot(&self, store: &ParamStore) -> OptimizerSnapshot {
        let named = |ts: &[Tensor]| {
            store
                .iter()
                .zip(ts)
                .map(|(p, t)| NamedTensor {
                    name: p.name.clone(),
                    tensor: t.clone(),
                })
                .collect()
        };
        OptimizerSnapshot {
            step: self.step,
            first_moments: named(&self.first),
            second_moments: named(&self.second),
        }
    }

    pub fn restore(store: &ParamStore, snap: &OptimizerSnapshot, config: AdamConfig) -> Result<Self> {
        let collect = |moments: &[NamedTensor]| -> Result<Vec<Tensor>> {
            if moments.len() != store.len() {
                return Err(Error::CheckpointMismatch {
                    msg: format!("{} optimizer moments for {} parameters", moments.len(), store.len()),
                    names: vec![],
                });
            }
            let mut out = vec![None; store.len()];
            for m in moments {
                let id = store.id(&m.name).ok_or_else(|| Error::CheckpointMismatch {
                    msg: "unknown optimizer moment".into(),
                    names: vec![m.name.clone()],
                })?;
                if store.value(id).shape() != m.tensor.shape() {
                    return Err(Error::CheckpointMismatch {
                        msg: "optimizer moment shape".into(),
                        names: vec![m.name.clone()],
                    });
                }
                out[id.index()] = Some(m.tensor.clone());
            }
            Ok(out.into_iter().map(|t| t.expect("every parameter covered")).collect())
        };
        Ok(AdamState {
            config,
            step: snap.step,
            first: collect(&snap.first_moments)?,
            second: collect(&snap.second_moments)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::vector(vec![x])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(1.5);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut s, 0.1);
        }
        assert_eq!(s.iter().next().unwrap().value.item(), 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut s = scalar_store(0.0);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        s.get_mut(s.id("x").unwrap()).grad = Tensor::vector(vec![1.0]);
        adam.step(&mut s, 0.01);
        let x = s.iter().next().unwrap().value.item();
        assert!((x + 0.01 / (1.0 + 1e-9)).abs() < 1e-15);
        assert_eq!(s.iter().next().unwrap().grad.item(), 0.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut s = scalar_store(0.0);
        let id = s.id("x").unwrap();
        let mut adam = AdamState::new(&s, AdamConfig::default());
        let mut converged_at = None;
        for step in 1..=2000 {
            let x = s.value(id).item();
            s.get_mut(id).grad = Tensor::vector(vec![2.0 * (x - 3.0)]);
            adam.step(&mut s, 1e-2);
            if (s.value(id).item() - 3.0).abs() < 1e-3 && converged_at.is_none() {
                converged_at = Some(step);
            }
        }
        assert!(converged_at.is_some());
        assert!((s.value(id).item() - 3.0).abs() < 1e-3);
    }

    #[test]
    fn snapshot_restore_round_trip() {
        let mut s = scalar_store(0.0);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        s.get_mut(s.id("x").unwrap()).grad = Tensor::vector(vec![0.5]);
        adam.step(&mut s, 0.1);
        let snap = adam.snapshot(&s);
        let back = AdamState::restore(&s, &snap, AdamConfig::default()).unwrap();
        assert_eq!(back, adam);
    }
}
