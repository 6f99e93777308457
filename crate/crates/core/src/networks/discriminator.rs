use crate::autodiff::{BatchNormConfig, BnMode, Graph, Var};
use crate::params::ParamStore;
use crate::rng;
use crate::tensor::{Dims, Tensor};

use super::{add_batchnorm, commit_running, he_normal, normal, Binder, Forward, NetError};

/// Channels of the first discriminator layer at full width.
pub const DISC_BASE_CHANNELS: usize = 32;

const LAYERS: usize = 5;
const KERNEL: usize = 4;
/// Std of the linear scoring head; small so a fresh discriminator scores
/// close to 0.5.
const HEAD_STD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    /// 1 for the Turing-test discriminators, one per class for the channel
    /// discriminator.
    pub out_units: usize,
    pub base_channels: usize,
    pub leaky_slope: f32,
}

impl DiscriminatorConfig {
    pub fn new(in_channels: usize, out_units: usize) -> Self {
        DiscriminatorConfig {
            in_channels,
            out_units,
            base_channels: DISC_BASE_CHANNELS,
            leaky_slope: 0.2,
        }
    }

    /// Channels of the five conv layers: `base * {1, 2, 4, 8, 16}`.
    pub fn ladder(&self) -> [usize; LAYERS] {
        let b = self.base_channels;
        [b, 2 * b, 4 * b, 8 * b, 16 * b]
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let l = self.ladder();
        let mut prev = self.in_channels;
        let mut n = 0;
        for &c in &l {
            n += prev * c * KERNEL * KERNEL;
            prev = c;
        }
        // biases on conv1 and conv5, gamma+beta on convs 2-4, linear head
        n + l[0] + l[4] + 2 * (l[1] + l[2] + l[3]) + l[4] * self.out_units + self.out_units
    }
}

/// Five stride-2 4x4 convolutions with leaky ReLU (batch-norm on layers
/// 2-4), global average pooling, a linear head and a sigmoid.
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    bn: BatchNormConfig,
    params: ParamStore,
}

impl Discriminator {
    pub fn build(cfg: DiscriminatorConfig, seed: u64) -> Result<Self, NetError> {
        Self::build_with(cfg, BatchNormConfig::default(), seed)
    }

    pub fn build_with(cfg: DiscriminatorConfig, bn: BatchNormConfig, seed: u64) -> Result<Self, NetError> {
        if cfg.in_channels == 0 || cfg.out_units == 0 || cfg.base_channels == 0 {
            return Err(NetError::Config(format!("degenerate discriminator {cfg:?}")));
        }
        let mut rng = rng::stream(seed, "init/disc");
        let mut params = ParamStore::new();
        let mut prev = cfg.in_channels;
        for (i, &c) in cfg.ladder().iter().enumerate() {
            let layer = i + 1;
            params.insert(
                format!("conv{layer}.weight"),
                he_normal(&mut rng, Dims::new(c, prev, KERNEL, KERNEL)),
                true,
            )?;
            if has_bn(layer) {
                add_batchnorm(&mut params, &format!("bn{layer}"), c)?;
            } else {
                params.insert(format!("conv{layer}.bias"), Tensor::zeros(Dims::new(1, c, 1, 1)), true)?;
            }
            prev = c;
        }
        params.insert(
            "head.weight",
            normal(&mut rng, Dims::new(cfg.out_units, prev, 1, 1), HEAD_STD),
            true,
        )?;
        params.insert("head.bias", Tensor::zeros(Dims::new(1, cfg.out_units, 1, 1)), true)?;
        Ok(Discriminator { cfg, bn, params })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Probabilities of shape `B x out_units x 1 x 1`.
    pub fn forward(&self, g: &mut Graph, x: Var, mode: BnMode, trainable: bool) -> Result<Forward, NetError> {
        let d = g.dims(x);
        if d.channels() != self.cfg.in_channels {
            return Err(NetError::Config(format!(
                "discriminator input {d} has {} channels, expected {}",
                d.channels(),
                self.cfg.in_channels
            )));
        }
        let slope = self.cfg.leaky_slope;
        let mut b = Binder::new(&self.params, trainable, self.bn, mode);
        let mut h = x;
        for layer in 1..=LAYERS {
            h = b.conv(g, h, &format!("conv{layer}"), !has_bn(layer), 2, 1)?;
            if has_bn(layer) {
                h = b.batchnorm(g, h, &format!("bn{layer}"))?;
            }
            h = g.leaky_relu(h, slope);
        }
        let pooled = g.global_avg_pool(h);
        let logits = b.conv(g, pooled, "head", true, 1, 0)?;
        let probs = g.sigmoid(logits);
        Ok(b.finish(probs, logits))
    }

    pub fn commit(&mut self, fwd: &mut Forward) -> Result<(), NetError> {
        commit_running(&mut self.params, std::mem::take(&mut fwd.running))
    }

    /// Eval-mode probabilities, one row of `out_units` per sample.
    pub fn predict(&self, input: &Tensor) -> Result<Vec<Vec<f32>>, NetError> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let fwd = self.forward(&mut g, x, BnMode::Eval, false)?;
        let out = g.value(fwd.output);
        Ok(out
            .data()
            .chunks(self.cfg.out_units)
            .map(|c| c.to_vec())
            .collect())
    }
}

fn has_bn(layer: usize) -> bool {
    (2..LAYERS).contains(&layer)
}
