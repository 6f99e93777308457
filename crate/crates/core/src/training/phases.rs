use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::autodiff::{BnMode, Graph, Var};
use crate::data::WhiteningStats;
use crate::networks::{Discriminator, DiscriminatorConfig, SegmentationNet};
use crate::optim::{adam_step, AdamState};
use crate::params::ParamStore;
use crate::rng::{self, Rng};
use crate::tensor::{Tensor, TensorError};

use super::{Batch, TrainConfig, TrainError};

/// Class indices in the segmentation output.
pub(crate) const PENUMBRA: usize = 1;
pub(crate) const CORE: usize = 2;

/// The two relativistic Turing-test discriminators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TuringTest {
    /// D1, penumbra masks.
    Penumbra,
    /// D2, core masks.
    Core,
}

impl TuringTest {
    pub fn class(self) -> usize {
        match self {
            TuringTest::Penumbra => PENUMBRA,
            TuringTest::Core => CORE,
        }
    }
}

/// Discriminator losses recomputed for the adversarial step, and the
/// adversarial objective built from them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdvLosses {
    pub j_d1: f64,
    pub j_d2: f64,
    pub j_d3: f64,
    pub j_adv: f64,
}

/// Losses of one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseReport {
    /// 1-based.
    pub epoch: usize,
    pub batch: usize,
    pub j_seg: f64,
    /// Losses of the discriminator updates (phases 2-4).
    pub disc_steps: Option<[f64; 3]>,
    pub adv: Option<AdvLosses>,
}

impl PhaseReport {
    pub fn log_line(&self) -> String {
        let mut s = format!("batch epoch={} batch={} j_seg={}", self.epoch, self.batch, self.j_seg);
        if let Some([a, b, c]) = self.disc_steps {
            s.push_str(&format!(" d1_step={a} d2_step={b} d3_step={c}"));
        }
        if let Some(adv) = self.adv {
            s.push_str(&format!(
                " j_d1={} j_d2={} j_d3={} j_adv={}",
                adv.j_d1, adv.j_d2, adv.j_d3, adv.j_adv
            ));
        }
        s
    }
}

/// `-(alpha J_D1 + beta J_D2 + gamma J_D3)`.
pub fn adversarial_objective(alpha: f32, beta: f32, gamma: f32, j: [f64; 3]) -> f64 {
    -(alpha as f64 * j[0] + beta as f64 * j[1] + gamma as f64 * j[2])
}

/// Build the discriminator input `[image, slot A, slot B]` for given coin
/// flips: heads puts the ground truth in slot A (label 1), tails puts the
/// prediction there (label 0).
pub fn turing_pair_with(
    g: &mut Graph,
    image: Var,
    gt: Var,
    pred: Var,
    heads: &[bool],
) -> Result<(Var, Vec<f32>), TensorError> {
    let (id, gd, pd) = (g.dims(image), g.dims(gt), g.dims(pred));
    for (name, d) in [("ground truth", gd), ("prediction", pd)] {
        if d.channels() != 1 || d.batch() != id.batch() || d.height() != id.height() || d.width() != id.width() {
            return Err(TensorError::Shape {
                op: "make_turing_pair",
                detail: format!("{name} mask {d} does not fit image {id}"),
            });
        }
    }
    if heads.len() != id.batch() {
        return Err(TensorError::Shape {
            op: "make_turing_pair",
            detail: format!("{} coin flips for batch {}", heads.len(), id.batch()),
        });
    }
    if g.value(pred).data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(TensorError::Invalid {
            op: "make_turing_pair",
            detail: "predicted mask outside [0, 1]".into(),
        });
    }
    let slot_a = g.select_samples(gt, pred, heads.to_vec())?;
    let slot_b = g.select_samples(pred, gt, heads.to_vec())?;
    let x = g.concat_channels(image, slot_a)?;
    let x = g.concat_channels(x, slot_b)?;
    Ok((x, heads.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect()))
}

/// [`turing_pair_with`] with one fair coin per sample drawn from `rng`.
pub fn make_turing_pair(g: &mut Graph, image: Var, gt: Var, pred: Var, rng: &mut Rng) -> Result<(Var, Vec<f32>), TensorError> {
    let heads: Vec<bool> = (0..g.dims(image).batch()).map(|_| rng.gen_bool(0.5)).collect();
    turing_pair_with(g, image, gt, pred, &heads)
}

/// Permute the class channels of `probs` per sample and return the one-hot
/// position of the penumbra channel after the shuffle.
pub(crate) fn channel_shuffle(g: &mut Graph, probs: Var, perms: Vec<Vec<usize>>) -> Result<(Var, Vec<f32>), TensorError> {
    let target = perms
        .iter()
        .flat_map(|p| p.iter().map(|&src| if src == PENUMBRA { 1.0 } else { 0.0 }))
        .collect();
    Ok((g.permute_channels(probs, perms)?, target))
}

fn draw_perms(rng: &mut Rng, batch: usize, channels: usize) -> Vec<Vec<usize>> {
    (0..batch)
        .map(|_| {
            let mut p: Vec<usize> = (0..channels).collect();
            p.shuffle(rng);
            p
        })
        .collect()
}

/// Networks, optimizer states and random streams of one training run.
pub struct Trainer {
    cfg: TrainConfig,
    pub seg: SegmentationNet,
    pub d1: Discriminator,
    pub d2: Discriminator,
    pub d3: Discriminator,
    /// Optimizer of the segmentation phase.
    pub seg_opt: AdamState,
    /// Separate optimizer of the adversarial phase, so its moments never mix
    /// with cross-entropy gradients.
    pub adv_opt: AdamState,
    pub d1_opt: AdamState,
    pub d2_opt: AdamState,
    pub d3_opt: AdamState,
    pub(crate) pairing: Rng,
    pub(crate) shuffle: Rng,
    pub(crate) order: Rng,
    /// Completed epochs.
    pub epoch: usize,
    /// Best checkpoint metric so far and the (1-based) epoch it was reached.
    pub best: Option<(f64, usize)>,
    /// Validation `[dice_pen, dice_core, metric]` per completed epoch.
    pub history: Vec<[f64; 3]>,
    pub whitening: Option<WhiteningStats>,
    pub fold: Option<usize>,
    cursor: (usize, usize),
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let bn = cfg.bn_config();
        let seg = SegmentationNet::build_with(cfg.seg_config(), bn, cfg.seed)?;
        let disc = |in_channels: usize, out: usize, label: &str| {
            let dc = DiscriminatorConfig {
                base_channels: cfg.disc_base_channels(),
                leaky_slope: cfg.leaky_slope,
                ..DiscriminatorConfig::new(in_channels, out)
            };
            Discriminator::build_with(dc, bn, rng::derive_seed(cfg.seed, label))
        };
        let pair_channels = cfg.in_channels + 2;
        let adam = AdamState::new(cfg.adam_config());
        Ok(Trainer {
            d1: disc(pair_channels, 1, "d1")?,
            d2: disc(pair_channels, 1, "d2")?,
            d3: disc(cfg.num_classes, cfg.num_classes, "d3")?,
            seg,
            seg_opt: adam.clone(),
            adv_opt: adam.clone(),
            d1_opt: adam.clone(),
            d2_opt: adam.clone(),
            d3_opt: adam,
            pairing: rng::stream(cfg.seed, "pairing"),
            shuffle: rng::stream(cfg.seed, "shuffle"),
            order: rng::stream(cfg.seed, "order"),
            epoch: 0,
            best: None,
            history: Vec::new(),
            whitening: None,
            fold: None,
            cursor: (0, 0),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Change the epoch budget, e.g. to extend a resumed run.
    pub fn set_epochs(&mut self, epochs: usize) -> Result<(), TrainError> {
        if epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        self.cfg.epochs = epochs;
        Ok(())
    }

    /// Parameter stores by network name, in a fixed order.
    pub fn stores(&self) -> [(&'static str, &ParamStore); 4] {
        [
            ("seg", self.seg.params()),
            ("d1", self.d1.params()),
            ("d2", self.d2.params()),
            ("d3", self.d3.params()),
        ]
    }

    /// Set the epoch / batch reported by non-finite loss errors.
    pub fn set_cursor(&mut self, epoch: usize, batch: usize) {
        self.cursor = (epoch, batch);
    }

    fn finite(&self, phase: u8, loss: &'static str, value: f64) -> Result<f64, TrainError> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(TrainError::NonFinite {
                phase,
                loss,
                value,
                epoch: self.cursor.0,
                batch: self.cursor.1,
            })
        }
    }

    /// Class probabilities with batch statistics and no gradient, as seen by
    /// the discriminator phases.
    pub fn predict_frozen(&self, images: &Tensor) -> Result<Tensor, TrainError> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let fwd = self.seg.forward(&mut g, x, BnMode::Frozen, false)?;
        Ok(g.value(fwd.output).clone())
    }

    /// Phase 1: one Adam step of the segmentation network on cross-entropy.
    pub fn phase1_seg_step(&mut self, batch: &Batch) -> Result<f64, TrainError> {
        let mut g = Graph::new();
        let x = g.constant(batch.images.clone());
        let mut fwd = self.seg.forward(&mut g, x, BnMode::Train, true)?;
        let loss = g.cross_entropy(fwd.logits, batch.labels.clone())?;
        let j = self.finite(1, "J_Seg", g.scalar(loss))?;
        let mut grads = g.backward(loss)?;
        let gm = fwd.grads(&mut grads);
        adam_step(self.seg.params_mut(), &gm, &mut self.seg_opt)?;
        self.seg.commit(&mut fwd)?;
        Ok(j)
    }

    fn turing_step(&mut self, test: TuringTest, batch: &Batch, probs: &Tensor) -> Result<f64, TrainError> {
        let class = test.class();
        let mut g = Graph::new();
        let image = g.constant(batch.images.clone());
        let gt = g.constant(batch.class_mask(class as u8));
        let p = g.constant(probs.clone());
        let pred = g.channel(p, class)?;
        let (input, labels) = make_turing_pair(&mut g, image, gt, pred, &mut self.pairing)?;
        let (disc, opt, phase, name) = match test {
            TuringTest::Penumbra => (&mut self.d1, &mut self.d1_opt, 2, "J_D1"),
            TuringTest::Core => (&mut self.d2, &mut self.d2_opt, 3, "J_D2"),
        };
        let mut fwd = disc.forward(&mut g, input, BnMode::Train, true)?;
        let loss = g.binary_cross_entropy(fwd.output, &labels)?;
        let j = g.scalar(loss);
        if !j.is_finite() {
            return Err(TrainError::NonFinite {
                phase,
                loss: name,
                value: j,
                epoch: self.cursor.0,
                batch: self.cursor.1,
            });
        }
        let mut grads = g.backward(loss)?;
        let gm = fwd.grads(&mut grads);
        adam_step(disc.params_mut(), &gm, opt)?;
        disc.commit(&mut fwd)?;
        Ok(j)
    }

    /// Phase 2: one Adam step of D1 against the frozen segmentation output.
    pub fn phase2_d1_step(&mut self, batch: &Batch, probs: &Tensor) -> Result<f64, TrainError> {
        self.turing_step(TuringTest::Penumbra, batch, probs)
    }

    /// Phase 3: one Adam step of D2.
    pub fn phase3_d2_step(&mut self, batch: &Batch, probs: &Tensor) -> Result<f64, TrainError> {
        self.turing_step(TuringTest::Core, batch, probs)
    }

    /// Phase 4: one Adam step of D3 on channel-shuffled probabilities.
    pub fn phase4_d3_step(&mut self, probs: &Tensor) -> Result<f64, TrainError> {
        let d = probs.dims();
        let perms = draw_perms(&mut self.shuffle, d.batch(), d.channels());
        self.d3_step_with(probs, perms)
    }

    /// Phase 4 with explicit per-sample permutations.
    pub fn d3_step_with(&mut self, probs: &Tensor, perms: Vec<Vec<usize>>) -> Result<f64, TrainError> {
        let mut g = Graph::new();
        let p = g.constant(probs.clone());
        let (input, target) = channel_shuffle(&mut g, p, perms)?;
        let mut fwd = self.d3.forward(&mut g, input, BnMode::Train, true)?;
        let loss = g.binary_cross_entropy(fwd.output, &target)?;
        let j = self.finite(4, "J_D3", g.scalar(loss))?;
        let mut grads = g.backward(loss)?;
        let gm = fwd.grads(&mut grads);
        adam_step(self.d3.params_mut(), &gm, &mut self.d3_opt)?;
        self.d3.commit(&mut fwd)?;
        Ok(j)
    }

    /// D3 loss for given probabilities and permutations, without an update.
    pub fn d3_loss(&self, probs: &Tensor, perms: Vec<Vec<usize>>, mode: BnMode) -> Result<f64, TrainError> {
        let mut g = Graph::new();
        let p = g.constant(probs.clone());
        let (input, target) = channel_shuffle(&mut g, p, perms)?;
        let fwd = self.d3.forward(&mut g, input, mode, false)?;
        let loss = g.binary_cross_entropy(fwd.output, &target)?;
        Ok(g.scalar(loss))
    }

    /// Phase 5: recompute the three discriminator losses with gradients
    /// flowing into the predicted masks only, and take one Adam step of the
    /// segmentation network on `-(alpha J_D1 + beta J_D2 + gamma J_D3)`.
    pub fn phase5_adv_step(&mut self, batch: &Batch) -> Result<AdvLosses, TrainError> {
        let mut g = Graph::new();
        let image = g.constant(batch.images.clone());
        let fwd = self.seg.forward(&mut g, image, BnMode::Frozen, true)?;
        let probs = fwd.output;

        let turing = |g: &mut Graph, disc: &Discriminator, class: usize, rng: &mut Rng| -> Result<Var, TrainError> {
            let gt = g.constant(batch.class_mask(class as u8));
            let pred = g.channel(probs, class)?;
            let (input, labels) = make_turing_pair(g, image, gt, pred, rng)?;
            let out = disc.forward(g, input, BnMode::Frozen, false)?;
            Ok(g.binary_cross_entropy(out.output, &labels)?)
        };
        let l1 = turing(&mut g, &self.d1, PENUMBRA, &mut self.pairing)?;
        let l2 = turing(&mut g, &self.d2, CORE, &mut self.pairing)?;
        let d = g.dims(probs);
        let perms = draw_perms(&mut self.shuffle, d.batch(), d.channels());
        let (shuffled, target) = channel_shuffle(&mut g, probs, perms)?;
        let out3 = self.d3.forward(&mut g, shuffled, BnMode::Frozen, false)?;
        let l3 = g.binary_cross_entropy(out3.output, &target)?;

        let (a, b, c) = (self.cfg.alpha, self.cfg.beta, self.cfg.gamma);
        let j_d1 = self.finite(5, "J_D1", g.scalar(l1))?;
        let j_d2 = self.finite(5, "J_D2", g.scalar(l2))?;
        let j_d3 = self.finite(5, "J_D3", g.scalar(l3))?;
        let j_adv = adversarial_objective(a, b, c, [j_d1, j_d2, j_d3]);

        let t1 = g.scale(l1, -a);
        let t2 = g.scale(l2, -b);
        let t3 = g.scale(l3, -c);
        let t12 = g.add(t1, t2)?;
        let total = g.add(t12, t3)?;
        let mut grads = g.backward(total)?;
        let gm = fwd.grads(&mut grads);
        adam_step(self.seg.params_mut(), &gm, &mut self.adv_opt)?;
        Ok(AdvLosses { j_d1, j_d2, j_d3, j_adv })
    }

    /// All phases for one mini-batch. `epoch` is 0-based; phases 2-5 run
    /// when adversarial training is on and the warm-up is over.
    pub fn train_batch(&mut self, batch: &Batch, epoch: usize, index: usize) -> Result<PhaseReport, TrainError> {
        self.set_cursor(epoch + 1, index);
        let j_seg = self.phase1_seg_step(batch)?;
        let mut report = PhaseReport {
            epoch: epoch + 1,
            batch: index,
            j_seg,
            disc_steps: None,
            adv: None,
        };
        if self.cfg.adversarial && epoch >= self.cfg.warmup_epochs {
            let probs = self.predict_frozen(&batch.images)?;
            let d1 = self.phase2_d1_step(batch, &probs)?;
            let d2 = self.phase3_d2_step(batch, &probs)?;
            let d3 = self.phase4_d3_step(&probs)?;
            report.disc_steps = Some([d1, d2, d3]);
            report.adv = Some(self.phase5_adv_step(batch)?);
        }
        Ok(report)
    }
}
