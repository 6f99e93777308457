//! Encoder-decoder segmenter with a VGG11 convolution ladder, index-based
//! unpooling and (optionally) matched-stage feature concatenation.
//!
//! Encoder stage `s` runs its 3x3 conv + batch-norm + ReLU blocks, keeps the
//! result as the skip feature, then max-pools 2x2 while recording argmax
//! indices. Decoder stage `s` unpools with those indices, concatenates the
//! stage-`s` skip feature when `skip_concat` is set, and runs the same number
//! of conv blocks, ending at the channel width of stage `s - 1`. A 1x1 conv
//! maps to class logits and a channel softmax yields probabilities.
//!
//! With `skip_concat = false` the same network has no concatenations, which
//! is the SegNet-style ablation.

use std::path::Path;

use crate::archive::Archive;
use crate::autodiff::{BatchNormConfig, BnMode, Graph, Var};
use crate::params::ParamStore;
use crate::rng;
use crate::tensor::{Dims, Tensor};

use super::{add_batchnorm, commit_running, he_normal, Binder, Forward, NetError, WidthMultiplier};

/// Output channels of each VGG11 convolution, grouped by pooling stage.
pub const VGG11_STAGES: [&[usize]; 5] = [&[64], &[128], &[256, 256], &[512, 512], &[512, 512]];

/// Spatial dims must be divisible by this (five 2x2 poolings).
pub const SPATIAL_MULTIPLE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegNetConfig {
    /// Number of input sequences.
    pub in_channels: usize,
    pub num_classes: usize,
    pub width: WidthMultiplier,
    /// `true` concatenates encoder features in the decoder; `false` is the
    /// plain unpooling decoder.
    pub skip_concat: bool,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        SegNetConfig {
            in_channels: 3,
            num_classes: 3,
            width: WidthMultiplier::FULL,
            skip_concat: true,
        }
    }
}

struct Plan {
    encoder: Vec<Vec<usize>>,
    /// Per decoder stage (same index as the encoder stage it mirrors):
    /// (input channels, output channels) of each conv.
    decoder: Vec<Vec<(usize, usize)>>,
}

impl SegNetConfig {
    fn plan(&self) -> Plan {
        let encoder: Vec<Vec<usize>> = VGG11_STAGES
            .iter()
            .map(|stage| stage.iter().map(|&c| self.width.scale(c)).collect())
            .collect();
        let mut decoder = Vec::with_capacity(encoder.len());
        for s in 0..encoder.len() {
            let stage = &encoder[s];
            let top = *stage.last().expect("non-empty stage");
            let mut cin = if self.skip_concat { 2 * top } else { top };
            let out = if s > 0 { *encoder[s - 1].last().expect("stage") } else { top };
            let n = stage.len();
            let mut convs = Vec::with_capacity(n);
            for j in 0..n {
                let cout = if j == n - 1 { out } else { stage[n - 2 - j] };
                convs.push((cin, cout));
                cin = cout;
            }
            decoder.push(convs);
        }
        Plan { encoder, decoder }
    }

    fn validate(&self) -> Result<(), NetError> {
        if self.in_channels == 0 {
            return Err(NetError::Config("in_channels must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(NetError::Config("num_classes must be >= 2".into()));
        }
        Ok(())
    }
}

pub struct SegmentationNet {
    cfg: SegNetConfig,
    bn: BatchNormConfig,
    params: ParamStore,
}

impl SegmentationNet {
    pub fn build(cfg: SegNetConfig, seed: u64) -> Result<Self, NetError> {
        Self::build_with(cfg, BatchNormConfig::default(), seed)
    }

    pub fn build_with(cfg: SegNetConfig, bn: BatchNormConfig, seed: u64) -> Result<Self, NetError> {
        cfg.validate()?;
        let plan = cfg.plan();
        let mut rng = rng::stream(seed, "init/seg");
        let mut params = ParamStore::new();
        let mut cin = cfg.in_channels;
        for (s, stage) in plan.encoder.iter().enumerate() {
            for (i, &cout) in stage.iter().enumerate() {
                let prefix = format!("enc{}.conv{i}", s + 1);
                params.insert(format!("{prefix}.weight"), he_normal(&mut rng, Dims::new(cout, cin, 3, 3)), true)?;
                add_batchnorm(&mut params, &format!("enc{}.bn{i}", s + 1), cout)?;
                cin = cout;
            }
        }
        for s in (0..plan.decoder.len()).rev() {
            for (j, &(ci, co)) in plan.decoder[s].iter().enumerate() {
                let prefix = format!("dec{}.conv{j}", s + 1);
                params.insert(format!("{prefix}.weight"), he_normal(&mut rng, Dims::new(co, ci, 3, 3)), true)?;
                add_batchnorm(&mut params, &format!("dec{}.bn{j}", s + 1), co)?;
            }
        }
        let top = plan.encoder[0][0];
        params.insert("head.weight", he_normal(&mut rng, Dims::new(cfg.num_classes, top, 1, 1)), true)?;
        params.insert("head.bias", Tensor::zeros(Dims::new(1, cfg.num_classes, 1, 1)), true)?;
        Ok(SegmentationNet { cfg, bn, params })
    }

    pub fn config(&self) -> &SegNetConfig {
        &self.cfg
    }

    pub fn bn_config(&self) -> BatchNormConfig {
        self.bn
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Scaled output channels of every encoder conv, by stage.
    pub fn encoder_channels(&self) -> Vec<Vec<usize>> {
        self.cfg.plan().encoder
    }

    /// Record a forward pass of `input` (`B x T x M x N`, `M` and `N`
    /// multiples of 32) on `g`. Parameters enter as gradient-requiring
    /// leaves when `trainable`; otherwise as constants.
    pub fn forward(&self, g: &mut Graph, input: Var, mode: BnMode, trainable: bool) -> Result<Forward, NetError> {
        let d = g.dims(input);
        if d.channels() != self.cfg.in_channels {
            return Err(NetError::Config(format!(
                "input {d} has {} channels, network expects {}",
                d.channels(),
                self.cfg.in_channels
            )));
        }
        if d.height() % SPATIAL_MULTIPLE != 0 || d.width() % SPATIAL_MULTIPLE != 0 || d.height() == 0 || d.width() == 0 {
            return Err(NetError::Config(format!(
                "input {d}: spatial dims must be positive multiples of {SPATIAL_MULTIPLE}"
            )));
        }
        let plan = self.cfg.plan();
        let mut b = Binder::new(&self.params, trainable, self.bn, mode);
        let mut x = input;
        let mut skips = Vec::with_capacity(plan.encoder.len());
        for (s, stage) in plan.encoder.iter().enumerate() {
            for i in 0..stage.len() {
                x = conv_bn_relu(g, &mut b, x, &format!("enc{}.conv{i}", s + 1), &format!("enc{}.bn{i}", s + 1))?;
            }
            let (pooled, idx) = g.maxpool2d_indices(x, 2)?;
            skips.push((x, idx));
            x = pooled;
        }
        for s in (0..plan.decoder.len()).rev() {
            let (skip, idx) = &skips[s];
            let hw = (g.dims(*skip).height(), g.dims(*skip).width());
            x = g.max_unpool2d(x, idx, hw)?;
            if self.cfg.skip_concat {
                x = g.concat_channels(x, *skip)?;
            }
            for j in 0..plan.decoder[s].len() {
                x = conv_bn_relu(g, &mut b, x, &format!("dec{}.conv{j}", s + 1), &format!("dec{}.bn{j}", s + 1))?;
            }
        }
        let logits = b.conv(g, x, "head", true, 1, 0)?;
        let probs = g.softmax_channels(logits);
        Ok(b.finish(probs, logits))
    }

    /// Store running statistics produced by a train-mode forward.
    pub fn commit(&mut self, fwd: &mut Forward) -> Result<(), NetError> {
        commit_running(&mut self.params, std::mem::take(&mut fwd.running))
    }

    /// Eval-mode class probabilities for a batch.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, NetError> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let fwd = self.forward(&mut g, x, BnMode::Eval, false)?;
        Ok(g.value(fwd.output).clone())
    }

    /// Replace every encoder parameter with the matching `seg/`-prefixed
    /// block of a checkpoint archive. Nothing is modified unless every
    /// encoder entry is present with identical dims.
    pub fn import_encoder_weights(&mut self, path: &Path) -> Result<(), NetError> {
        let archive = Archive::load(path)?;
        let mut staged = Vec::new();
        for (name, entry) in self.params.iter().filter(|(n, _)| n.starts_with("enc")) {
            let key = format!("seg/{name}");
            let t = archive.tensor(&key).map_err(|e| NetError::Import {
                name: name.to_string(),
                detail: e.to_string(),
            })?;
            if t.dims() != entry.value.dims() {
                return Err(NetError::Import {
                    name: name.to_string(),
                    detail: format!("archive has dims {}, network has {}", t.dims(), entry.value.dims()),
                });
            }
            staged.push((name.to_string(), t.clone()));
        }
        for (name, t) in staged {
            self.params.set(&name, t)?;
        }
        Ok(())
    }
}

fn conv_bn_relu(g: &mut Graph, b: &mut Binder<'_>, x: Var, conv: &str, bn: &str) -> Result<Var, NetError> {
    let y = b.conv(g, x, conv, false, 1, 1)?;
    let y = b.batchnorm(g, y, bn)?;
    Ok(g.relu(y))
}
