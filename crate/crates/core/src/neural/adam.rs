use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{Parameters, Tensor2};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 coefficient folded into the gradient before the moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Tensor2<T>>,
    pub second: Vec<Tensor2<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<P: Parameters<T>>(params: &P, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor2<T>> = params
            .tensors()
            .iter()
            .map(|t| Tensor2::zeros(t.raw_dim()))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected ADAM update of every parameter tensor.
pub fn adam_step<T: Scalar, P: Parameters<T>>(params: &mut P, grads: &P, state: &mut AdamState<T>) {
    state.step += 1;
    let c = state.config;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let wd = T::lit(c.weight_decay);
    let eps = T::lit(c.epsilon);
    let lr = T::lit(c.lr);
    let t = state.step as i32;
    let correct1 = T::one() - b1.powi(t);
    let correct2 = T::one() - b2.powi(t);
    let one = T::one();

    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            let g = g + wd * *p;
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
}
