//! Adaptive moment estimation over flat parameter tensors.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// One moment buffer per tensor, sized from `sizes`.
    pub fn new(cfg: AdamConfig, sizes: &[usize]) -> Self {
        Adam {
            cfg,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Advances the shared step counter used for bias correction.
    pub fn tick(&mut self) {
        self.t += 1;
    }

    /// Updates `param` (the sub-range of tensor `idx` starting at `offset`).
    /// Call [`Adam::tick`] once per optimisation step first.
    pub fn update_range(&mut self, idx: usize, offset: usize, param: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(param.len(), grad.len());
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let t = self.t.max(1) as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let m = &mut self.m[idx][offset..offset + param.len()];
        let v = &mut self.v[idx][offset..offset + param.len()];
        for (((p, &g), m), v) in param
            .iter_mut()
            .zip(grad)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    /// Ticks once and updates the whole of every tensor.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) {
        self.tick();
        for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.update_range(idx, 0, p, g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &[2]);
        let mut p = [1.0, -1.0];
        adam.step(&mut [&mut p[..]], &[vec![3.0, -0.5]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.05), &[1]);
        let mut x = [4.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 1.5)];
            adam.step(&mut [&mut x[..]], &[g]);
        }
        assert!((x[0] - 1.5).abs() < 1e-3);
    }
}
