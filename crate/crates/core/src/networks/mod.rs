//! Segmentation network and discriminator builders.

mod discriminator;
mod segnet;
mod width;

use indexmap::IndexMap;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::archive::ArchiveError;
use crate::autodiff::{BatchNormConfig, BnMode, Gradients, Graph, Var};
use crate::params::{GradMap, ParamError, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Dims, Tensor, TensorError};

pub use discriminator::{Discriminator, DiscriminatorConfig, DISC_BASE_CHANNELS};
pub use segnet::{SegNetConfig, SegmentationNet, SPATIAL_MULTIPLE, VGG11_STAGES};
pub use width::WidthMultiplier;

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("cannot import `{name}`: {detail}")]
    Import { name: String, detail: String },
}

/// Graph handles produced by one network forward pass.
pub struct Forward {
    /// Network output (probabilities).
    pub output: Var,
    /// Pre-activation output (logits).
    pub logits: Var,
    /// Parameter leaves by name, for collecting gradients.
    pub leaves: IndexMap<String, Var>,
    /// New running statistics to commit when the pass ran in train mode.
    pub running: Vec<(String, Tensor)>,
}

impl Forward {
    /// Gradients of every trainable leaf, keyed by parameter name.
    pub fn grads(&self, grads: &mut Gradients) -> GradMap {
        let mut out = GradMap::new();
        for (name, &v) in &self.leaves {
            if let Some(g) = grads.take(v) {
                out.insert(name.clone(), g);
            }
        }
        out
    }
}

/// Binds a [`ParamStore`] to a graph for one forward pass.
pub(crate) struct Binder<'a> {
    store: &'a ParamStore,
    trainable: bool,
    bn: BatchNormConfig,
    mode: BnMode,
    leaves: IndexMap<String, Var>,
    running: Vec<(String, Tensor)>,
}

impl<'a> Binder<'a> {
    pub(crate) fn new(store: &'a ParamStore, trainable: bool, bn: BatchNormConfig, mode: BnMode) -> Self {
        Binder {
            store,
            trainable,
            bn,
            mode,
            leaves: IndexMap::new(),
            running: Vec::new(),
        }
    }

    pub(crate) fn param(&mut self, g: &mut Graph, name: &str) -> Result<Var, NetError> {
        if let Some(&v) = self.leaves.get(name) {
            return Ok(v);
        }
        let entry = self
            .store
            .entry(name)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        let v = g.leaf(entry.value.clone(), self.trainable && entry.trainable);
        self.leaves.insert(name.to_string(), v);
        Ok(v)
    }

    pub(crate) fn conv(
        &mut self,
        g: &mut Graph,
        x: Var,
        prefix: &str,
        bias: bool,
        stride: usize,
        pad: usize,
    ) -> Result<Var, NetError> {
        let w = self.param(g, &format!("{prefix}.weight"))?;
        let b = if bias {
            Some(self.param(g, &format!("{prefix}.bias"))?)
        } else {
            None
        };
        Ok(g.conv2d(x, w, b, stride, pad)?)
    }

    pub(crate) fn batchnorm(&mut self, g: &mut Graph, x: Var, prefix: &str) -> Result<Var, NetError> {
        let gamma = self.param(g, &format!("{prefix}.gamma"))?;
        let beta = self.param(g, &format!("{prefix}.beta"))?;
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        let lookup = |n: &str| {
            self.store
                .get(n)
                .cloned()
                .ok_or_else(|| NetError::from(ParamError::Unknown(n.to_string())))
        };
        let mut mean = lookup(&mean_name)?;
        let mut var = lookup(&var_name)?;
        let y = g.batchnorm2d(x, gamma, beta, mean.data_mut(), var.data_mut(), self.mode, self.bn)?;
        if self.mode == BnMode::Train {
            self.running.push((mean_name, mean));
            self.running.push((var_name, var));
        }
        Ok(y)
    }

    pub(crate) fn finish(self, output: Var, logits: Var) -> Forward {
        Forward {
            output,
            logits,
            leaves: self.leaves,
            running: self.running,
        }
    }
}

pub(crate) fn commit_running(store: &mut ParamStore, running: Vec<(String, Tensor)>) -> Result<(), NetError> {
    for (name, t) in running {
        store.set(&name, t)?;
    }
    Ok(())
}

/// He-normal convolution weights, `std = sqrt(2 / fan_in)`.
pub(crate) fn he_normal(rng: &mut Rng, dims: Dims) -> Tensor {
    let fan_in = dims.channels() * dims.plane();
    normal(rng, dims, (2.0 / fan_in as f64).sqrt())
}

pub(crate) fn normal(rng: &mut Rng, dims: Dims, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let data = (0..dims.numel()).map(|_| dist.sample(rng) as f32).collect();
    Tensor::from_vec(dims, data).expect("dims")
}

pub(crate) fn add_batchnorm(store: &mut ParamStore, prefix: &str, channels: usize) -> Result<(), NetError> {
    let d = Dims::new(1, channels, 1, 1);
    store.insert(format!("{prefix}.gamma"), Tensor::full(d, 1.0), true)?;
    store.insert(format!("{prefix}.beta"), Tensor::zeros(d), true)?;
    store.insert(format!("{prefix}.running_mean"), Tensor::zeros(d), false)?;
    store.insert(format!("{prefix}.running_var"), Tensor::full(d, 1.0), false)?;
    Ok(())
}
