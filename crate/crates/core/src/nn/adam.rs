//! Bias-corrected adaptive-moment optimizer.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rate per parameter tensor.
    lrs: Vec<f64>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    /// Optimizer state for every tensor in `store`, with the learning rate
    /// chosen per tensor name.
    pub fn new(store: &ParamStore, lr_for: impl Fn(&str) -> f64) -> Adam {
        let shapes: Vec<&Tensor> = store.ids().map(|id| store.value(id)).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lrs: store.ids().map(|id| lr_for(store.name(id))).collect(),
            m: shapes.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
            v: shapes.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
            step: 0,
        }
    }

    pub fn with_lr(store: &ParamStore, lr: f64) -> Adam {
        Adam::new(store, |_| lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self, id: ParamId) -> f64 {
        self.lrs[id.0]
    }

    /// One update from the accumulated gradients. Gradients are left in place.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            let k = id.0;
            let g = store.grad(id).data.clone();
            let lr = self.lrs[k];
            let (m, v) = (&mut self.m[k].data, &mut self.v[k].data);
            let w = &mut store.value_mut(id).data;
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                w[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
