//! Run configuration and its `key=value` file form.
//!
//! One `key=value` per line, `#` starts a comment. Every key is optional
//! (defaults below) and unknown keys are an error. [`TrainConfig::to_kv`]
//! writes every key, so a written config reproduces the run on its own.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::BatchNormConfig;
use crate::data::FoldPolicy;
use crate::networks::{SegNetConfig, WidthMultiplier, DISC_BASE_CHANNELS};
use crate::optim::AdamConfig;

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// Encoder features concatenated in the decoder.
    SumNet,
    /// Plain unpooling decoder.
    SegNet,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::SumNet => "sumnet",
            Architecture::SegNet => "segnet",
        })
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sumnet" => Ok(Architecture::SumNet),
            "segnet" => Ok(Architecture::SegNet),
            other => Err(format!("unknown architecture `{other}` (sumnet|segnet)")),
        }
    }
}

/// Only checkpoint criterion: mean of penumbra and core validation Dice.
pub const CHECKPOINT_METRIC: &str = "mean_dice";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub alpha: f32,
    pub beta: f32,
    pub gamma: f32,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs at the start that run the segmentation phase only.
    pub warmup_epochs: usize,
    /// `false` runs the segmentation phase only.
    pub adversarial: bool,
    pub architecture: Architecture,
    pub width: WidthMultiplier,
    pub in_channels: usize,
    pub num_classes: usize,
    pub bn_eps: f32,
    pub bn_momentum: f32,
    pub leaky_slope: f32,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_eps: f32,
    pub fold_policy: FoldPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let bn = BatchNormConfig::default();
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 200,
            lr: 0.001,
            alpha: 0.001,
            beta: 0.001,
            gamma: 0.001,
            batch_size: 8,
            seed: 0,
            warmup_epochs: 0,
            adversarial: true,
            architecture: Architecture::SumNet,
            width: WidthMultiplier::FULL,
            in_channels: 3,
            num_classes: 3,
            bn_eps: bn.eps,
            bn_momentum: bn.momentum,
            leaky_slope: 0.2,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            fold_policy: FoldPolicy::Strict,
        }
    }
}

fn policy_name(p: FoldPolicy) -> &'static str {
    match p {
        FoldPolicy::Strict => "strict",
        FoldPolicy::Proportional => "proportional",
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        for (k, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{k} must be >= 0, got {v}"));
            }
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.in_channels == 0 {
            return fail("in_channels must be >= 1".into());
        }
        if self.num_classes != 3 {
            return fail(format!("num_classes must be 3 (background, penumbra, core), got {}", self.num_classes));
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return fail("bn_eps must be > 0 and bn_momentum in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return fail("adam betas must be in [0, 1) and adam_eps > 0".into());
        }
        if !self.leaky_slope.is_finite() {
            return fail("leaky_slope must be finite".into());
        }
        Ok(())
    }

    pub fn seg_config(&self) -> SegNetConfig {
        SegNetConfig {
            in_channels: self.in_channels,
            num_classes: self.num_classes,
            width: self.width,
            skip_concat: self.architecture == Architecture::SumNet,
        }
    }

    /// First-layer discriminator channels; the width multiplier scales the
    /// discriminators as well.
    pub fn disc_base_channels(&self) -> usize {
        self.width.scale(DISC_BASE_CHANNELS)
    }

    pub fn bn_config(&self) -> BatchNormConfig {
        BatchNormConfig {
            eps: self.bn_eps,
            momentum: self.bn_momentum,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn to_kv(&self) -> String {
        let pairs: Vec<(&str, String)> = vec![
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("warmup_epochs", self.warmup_epochs.to_string()),
            ("adversarial", self.adversarial.to_string()),
            ("architecture", self.architecture.to_string()),
            ("width", self.width.to_string()),
            ("in_channels", self.in_channels.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("checkpoint_metric", CHECKPOINT_METRIC.to_string()),
            ("bn_eps", self.bn_eps.to_string()),
            ("bn_momentum", self.bn_momentum.to_string()),
            ("leaky_slope", self.leaky_slope.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("fold_policy", policy_name(self.fold_policy).to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse_kv(text: &str) -> Result<Self, TrainError> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| TrainError::Config(format!("line {}: {m}", i + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("`{line}` is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(err(format!("duplicate key `{k}`")));
            }
            fn num<T: FromStr>(k: &str, v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("bad value `{v}` for `{k}`"))
            }
            let r: Result<(), String> = (|| {
                match k {
                    "epochs" => cfg.epochs = num(k, v)?,
                    "lr" => cfg.lr = num(k, v)?,
                    "alpha" => cfg.alpha = num(k, v)?,
                    "beta" => cfg.beta = num(k, v)?,
                    "gamma" => cfg.gamma = num(k, v)?,
                    "batch_size" => cfg.batch_size = num(k, v)?,
                    "seed" => cfg.seed = num(k, v)?,
                    "warmup_epochs" => cfg.warmup_epochs = num(k, v)?,
                    "adversarial" => cfg.adversarial = num(k, v)?,
                    "architecture" => cfg.architecture = v.parse()?,
                    "width" => cfg.width = v.parse()?,
                    "in_channels" => cfg.in_channels = num(k, v)?,
                    "num_classes" => cfg.num_classes = num(k, v)?,
                    "checkpoint_metric" if v == CHECKPOINT_METRIC => {}
                    "checkpoint_metric" => return Err(format!("checkpoint_metric must be {CHECKPOINT_METRIC}")),
                    "bn_eps" => cfg.bn_eps = num(k, v)?,
                    "bn_momentum" => cfg.bn_momentum = num(k, v)?,
                    "leaky_slope" => cfg.leaky_slope = num(k, v)?,
                    "adam_beta1" => cfg.adam_beta1 = num(k, v)?,
                    "adam_beta2" => cfg.adam_beta2 = num(k, v)?,
                    "adam_eps" => cfg.adam_eps = num(k, v)?,
                    "fold_policy" => {
                        cfg.fold_policy = match v {
                            "strict" => FoldPolicy::Strict,
                            "proportional" => FoldPolicy::Proportional,
                            _ => return Err(format!("fold_policy must be strict or proportional, got `{v}`")),
                        }
                    }
                    _ => return Err(format!("unknown key `{k}`")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_training_setup() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.lr, c.alpha, c.beta, c.gamma), (200, 0.001, 0.001, 0.001, 0.001));
        assert_eq!(c.disc_base_channels(), 32);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let c = TrainConfig {
            width: "1/4".parse().unwrap(),
            adversarial: false,
            architecture: Architecture::SegNet,
            seed: 42,
            ..TrainConfig::default()
        };
        let text = c.to_kv();
        let back = TrainConfig::parse_kv(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_kv(), text);
        assert_eq!(back.disc_base_channels(), 8);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(TrainConfig::parse_kv("epochs=3\nlearning_rate=0.1\n").is_err());
        assert!(TrainConfig::parse_kv("epochs=3\nepochs=4\n").is_err());
        assert!(TrainConfig::parse_kv("epochs=0\n").is_err());
        assert!(TrainConfig::parse_kv("lr=-1\n").is_err());
        assert!(TrainConfig::parse_kv("architecture=unet\n").is_err());
        let c = TrainConfig::parse_kv("# comment\nepochs = 5 # trailing\n").unwrap();
        assert_eq!(c.epochs, 5);
    }
}
