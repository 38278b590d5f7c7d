use lhdr_tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::net::{Model, ModelConfig};
use crate::{Error, Result};

/// Weights drawn from `N(0, 2 / fan_in)` with `fan_in = (in / groups) · k²`;
/// biases zero.
pub fn kaiming_init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Model> {
    let mut model = Model::zeros(cfg)?;
    let specs: Vec<_> = model.layers().iter().map(|l| l.conv).collect();
    for (w, spec) in model.weights.iter_mut().zip(specs) {
        let fan_in = spec.in_per_group() * spec.kernel * spec.kernel;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        for v in w.data_mut() {
            *v = normal.sample(rng) as f32;
        }
    }
    Ok(model)
}

/// Learning rate halves every `half_every` iterations.
pub fn lr_schedule(iter: u64, lr0: f64, half_every: u64) -> f64 {
    lr0 * 0.5f64.powi((iter / half_every.max(1)).min(i32::MAX as u64) as i32)
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        let zeros = || model.weights.iter().chain(&model.biases).map(|t| Tensor::zeros(t.dims())).collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update. `grads` follow the model's weights then
/// biases. Non-finite gradients abort before anything is modified.
pub fn adam_step(model: &mut Model, grads: &[Tensor<f32>], state: &mut AdamState, lr: f64) -> Result<()> {
    let n = model.weights.len() + model.biases.len();
    if grads.len() != n || state.m.len() != n {
        return Err(Error::invalid(format!("expected {n} gradient tensors, got {}", grads.len())));
    }
    if grads.iter().any(|g| !g.all_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            iteration: state.step as usize,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let step = lr / c1;
    let eps = state.eps;
    for (((p, g), m), v) in model.tensors_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        if p.dims() != g.dims() {
            return Err(Error::invalid(format!("gradient dims {} do not match {}", g.dims(), p.dims())));
        }
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            let gv = gv as f64;
            let mn = b1 * *mv as f64 + (1.0 - b1) * gv;
            let vn = b2 * *vv as f64 + (1.0 - b2) * gv * gv;
            *mv = mn as f32;
            *vv = vn as f32;
            *pv -= (step * mn / ((vn / c2).sqrt() + eps)) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn schedule() {
        assert_eq!(lr_schedule(0, 2e-4, 250_000), 2e-4);
        assert_eq!(lr_schedule(249_999, 2e-4, 250_000), 2e-4);
        assert_eq!(lr_schedule(250_000, 2e-4, 250_000), 1e-4);
        assert_eq!(lr_schedule(500_000, 2e-4, 250_000), 5e-5);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let cfg = ModelConfig::default();
        let mut model = kaiming_init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let before = model.weights[3].clone();
        let mut st = AdamState::new(&model);
        let grads: Vec<_> = model.weights.iter().chain(&model.biases).map(|t| Tensor::zeros(t.dims())).collect();
        adam_step(&mut model, &grads, &mut st, 1e-3).unwrap();
        assert_eq!(st.step, 1);
        assert_eq!(model.weights[3].data(), before.data());
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = ModelConfig::default();
        let mut model = Model::zeros(&cfg).unwrap();
        let mut st = AdamState::new(&model);
        let grads: Vec<_> = model.weights.iter().chain(&model.biases).map(|t| Tensor::full(t.dims(), 0.5)).collect();
        adam_step(&mut model, &grads, &mut st, 1e-3).unwrap();
        assert!(model.weights[0].data().iter().all(|&v| (v + 1e-3).abs() < 1e-8));
    }

    #[test]
    fn non_finite_aborts() {
        let mut model = Model::zeros(&ModelConfig::default()).unwrap();
        let mut st = AdamState::new(&model);
        let mut grads: Vec<_> = model.weights.iter().chain(&model.biases).map(|t| Tensor::zeros(t.dims())).collect();
        grads[2].data_mut()[0] = f32::NAN;
        assert!(matches!(adam_step(&mut model, &grads, &mut st, 1e-3), Err(Error::NonFinite { .. })));
        assert_eq!(st.step, 0);
    }
}
