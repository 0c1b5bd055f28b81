//! Adaptive-moment optimizer over [`PolicyParams`].

use ndarray::Zip;

use super::mlp::{Gradients, PolicyParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    pub fn new(params: &PolicyParams) -> Self {
        Self {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
        }
    }

    /// Descends along `grad`. A zero learning rate leaves `params` untouched.
    pub fn step(&mut self, params: &mut PolicyParams, grad: &Gradients, lr: f64) {
        self.step += 1;
        if lr == 0.0 {
            return;
        }
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
        };
        for i in 0..params.weights.len() {
            Zip::from(&mut params.weights[i])
                .and(&grad.weights[i])
                .and(&mut self.m.weights[i])
                .and(&mut self.v.weights[i])
                .for_each(update);
            Zip::from(&mut params.biases[i])
                .and(&grad.biases[i])
                .and(&mut self.m.biases[i])
                .and(&mut self.v.biases[i])
                .for_each(update);
        }
        Zip::from(&mut params.log_std)
            .and(&grad.log_std)
            .and(&mut self.m.log_std)
            .and(&mut self.v.log_std)
            .for_each(update);
        params.generation += 1;
    }
}
