//! Adam with bias correction.

use indexmap::IndexMap;
use thiserror::Error;

use crate::params::{GradMap, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("gradient for `{name}` has dims {got}, parameter has {expected}")]
    Shape {
        name: String,
        expected: String,
        got: String,
    },
    #[error("gradient supplied for unknown or frozen parameter `{0}`")]
    Unknown(String),
    #[error("learning rate must be positive, got {0}")]
    LearningRate(f32),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    /// Completed steps.
    pub t: u64,
    pub moments: IndexMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            t: 0,
            moments: IndexMap::new(),
        }
    }
}

/// One Adam update of every trainable parameter that has a gradient in
/// `grads`. Parameters without a gradient keep their value and moments.
pub fn adam_step(params: &mut ParamStore, grads: &GradMap, state: &mut AdamState) -> Result<(), OptimError> {
    let cfg = state.config;
    if !(cfg.lr > 0.0) {
        return Err(OptimError::LearningRate(cfg.lr));
    }
    for (name, g) in grads {
        let entry = params
            .entry(name)
            .filter(|e| e.trainable)
            .ok_or_else(|| OptimError::Unknown(name.clone()))?;
        if entry.value.dims() != g.dims() {
            return Err(OptimError::Shape {
                name: name.clone(),
                expected: entry.value.dims().to_string(),
                got: g.dims().to_string(),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - (cfg.beta1 as f64).powi(t);
    let bc2 = 1.0 - (cfg.beta2 as f64).powi(t);
    let step = (cfg.lr as f64 / bc1) as f32;
    let bc2_sqrt = bc2.sqrt() as f32;
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above");
        let mom = state.moments.entry(name.clone()).or_insert_with(|| Moments {
            m: Tensor::zeros(g.dims()),
            v: Tensor::zeros(g.dims()),
        });
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        for (((pv, mv), vv), &gv) in p
            .data_mut()
            .iter_mut()
            .zip(mom.m.data_mut())
            .zip(mom.v.data_mut())
            .zip(g.data())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let denom = vv.sqrt() / bc2_sqrt + cfg.eps;
            *pv -= step * *mv / denom;
        }
    }
    Ok(())
}
