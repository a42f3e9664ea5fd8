use crate::autodiff::Array;
use crate::model::{round_to_f32, ParameterStore};

use super::TrainConfig;

pub fn global_norm(grads: &[Array]) -> f64 {
    grads.iter().map(Array::squared_norm).sum::<f64>().sqrt()
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [Array], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_in_place(s));
    }
    norm
}

/// Adam with decoupled weight decay. Parameters are kept `f32`-representable.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u32,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl AdamW {
    pub fn new(store: &ParameterStore, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Array> = store.arrays().iter().map(|a| Array::zeros(a.rows(), a.cols())).collect();
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParameterStore, grads: &[Array]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in store.arrays_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let update = (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
                *pi -= self.lr * (update + self.weight_decay * *pi);
            }
            round_to_f32(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut store = ParameterStore::init(&ModelConfig::with_widths(3, 3, 3), 1).unwrap();
        let before = store.arrays().to_vec();
        let cfg = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        let mut opt = AdamW::new(&store, &cfg);
        let grads: Vec<Array> = before.iter().map(|a| a.map(|_| 0.3)).collect();
        opt.step(&mut store, &grads);
        assert_eq!(store.arrays(), &before[..]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParameterStore::init(&ModelConfig::with_widths(3, 3, 3), 1).unwrap();
        let before = store.arrays().to_vec();
        let cfg = TrainConfig { lr: 0.01, weight_decay: 0.0, ..TrainConfig::default() };
        let mut opt = AdamW::new(&store, &cfg);
        let grads: Vec<Array> = before.iter().map(|a| a.map(|_| 2.0)).collect();
        opt.step(&mut store, &grads);
        // bias-corrected first step is lr · sign(g)
        for (a, b) in store.arrays().iter().zip(&before) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((y - x - 0.01).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn clipping() {
        let mut g = vec![Array::row_vector(vec![3.0, 4.0])];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
        let mut small = vec![Array::row_vector(vec![0.3, 0.4])];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.3, 0.4]);
    }
}
