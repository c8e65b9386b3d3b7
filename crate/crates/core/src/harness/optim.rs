use crate::autograd::Matrix;
use crate::model::{Gradients, ParamStore};

/// Momentum SGD with decoupled weight decay on `*.weight` matrices.
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Matrix>,
    decays: Vec<bool>,
}

impl Sgd {
    pub fn new(store: &ParamStore, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: store.iter().map(|(_, _, m)| Matrix::zeros(m.rows(), m.cols())).collect(),
            decays: store.iter().map(|(_, name, _)| name.ends_with(".weight")).collect(),
        }
    }

    /// `v <- mu v + g`, `p <- p - lr v - lr wd p`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let v = &mut self.velocity[id.0];
            let g = grads.get(id);
            for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
                *vi = self.momentum * *vi + gi;
            }
            let decay = if self.decays[id.0] { lr * self.weight_decay } else { 0.0 };
            let p = store.get_mut(id);
            for (pi, vi) in p.data_mut().iter_mut().zip(v.data()) {
                *pi -= lr * vi + decay * *pi;
            }
        }
    }
}
