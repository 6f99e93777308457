use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;

use crate::data::SliceSample;
use crate::evaluation::{argmax_labels, confusion, ConfusionCounts, SubjectMetrics};
use crate::networks::SegmentationNet;
use crate::tensor::Tensor;

use super::{save_checkpoint, Batch, TrainError, Trainer, CHECKPOINT_BEST, CHECKPOINT_LAST};

pub struct FitData<'a> {
    pub train: &'a [SliceSample],
    pub val: &'a [SliceSample],
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub dice_pen: f64,
    pub dice_core: f64,
    /// Mean of the two Dice scores; NaN without validation data.
    pub metric: f64,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub epochs: Vec<EpochReport>,
    pub best: Option<(f64, usize)>,
}

/// One predicted slice, cropped back to the original in-plane size.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicePrediction {
    pub z: usize,
    pub height: usize,
    pub width: usize,
    pub pred: Vec<u8>,
    pub gt: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectPrediction {
    pub subject: String,
    pub slices: Vec<SlicePrediction>,
    pub counts: ConfusionCounts,
}

impl SubjectPrediction {
    pub fn metrics(&self) -> SubjectMetrics {
        SubjectMetrics {
            subject: self.subject.clone(),
            counts: self.counts,
        }
    }
}

/// Eval-mode predictions for `samples`, grouped by subject in order of first
/// appearance. Padding is removed before counting.
pub fn evaluate_samples(
    net: &SegmentationNet,
    samples: &[SliceSample],
    batch_size: usize,
) -> Result<Vec<SubjectPrediction>, TrainError> {
    let mut out: IndexMap<String, SubjectPrediction> = IndexMap::new();
    let mut start = 0;
    while start < samples.len() {
        let dims = samples[start].image.dims();
        let mut end = start + 1;
        while end < samples.len() && end - start < batch_size.max(1) && samples[end].image.dims() == dims {
            end += 1;
        }
        let chunk = &samples[start..end];
        let images: Vec<&Tensor> = chunk.iter().map(|s| &s.image).collect();
        let probs = net.predict(&Tensor::stack(&images)?)?;
        let labels = argmax_labels(&probs);
        let plane = dims.plane();
        for (s, pred) in chunk.iter().zip(labels.chunks(plane)) {
            let pred = s.padding.unpad(pred);
            let gt = s.padding.unpad(&s.label);
            let counts = confusion(&pred, &gt)?;
            let entry = out.entry(s.subject.clone()).or_insert_with(|| SubjectPrediction {
                subject: s.subject.clone(),
                slices: Vec::new(),
                counts: ConfusionCounts::default(),
            });
            entry.counts.add(&counts);
            entry.slices.push(SlicePrediction {
                z: s.z,
                height: s.padding.height,
                width: s.padding.width,
                pred,
                gt,
            });
        }
        start = end;
    }
    Ok(out.into_values().collect())
}

/// Mean per-subject Dice for penumbra and core.
fn validation_dice(preds: &[SubjectPrediction]) -> (f64, f64) {
    if preds.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = preds.len() as f64;
    let pen = preds.iter().map(|p| p.counts.penumbra().dice()).sum::<f64>() / n;
    let core = preds.iter().map(|p| p.counts.core().dice()).sum::<f64>() / n;
    (pen, core)
}

/// Train from `trainer.epoch` up to the configured number of epochs.
///
/// Writes one `batch ...` line per mini-batch and one `epoch ...` line per
/// epoch to `log`. With `out_dir`, `last.ckpt` is written after every epoch
/// and `best.ckpt` whenever the validation metric improves (every epoch when
/// there is no validation data).
pub fn fit(
    trainer: &mut Trainer,
    data: FitData<'_>,
    out_dir: Option<&Path>,
    log: &mut dyn Write,
) -> Result<FitOutcome, TrainError> {
    if data.train.is_empty() {
        return Err(TrainError::Config("no training slices".into()));
    }
    let bs = trainer.config().batch_size;
    let mut epochs = Vec::new();
    while trainer.epoch < trainer.config().epochs {
        let epoch = trainer.epoch;
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut trainer.order);
        for (i, idx) in order.chunks(bs).enumerate() {
            let samples: Vec<&SliceSample> = idx.iter().map(|&k| &data.train[k]).collect();
            let batch = Batch::from_samples(&samples)?;
            let report = trainer.train_batch(&batch, epoch, i)?;
            writeln!(log, "{}", report.log_line())?;
        }
        let preds = evaluate_samples(&trainer.seg, data.val, bs)?;
        let (dice_pen, dice_core) = validation_dice(&preds);
        let metric = (dice_pen + dice_core) / 2.0;
        let improved = match trainer.best {
            _ if data.val.is_empty() => true,
            None => true,
            Some((b, _)) => metric > b,
        };
        trainer.epoch += 1;
        trainer.history.push([dice_pen, dice_core, metric]);
        if improved {
            trainer.best = Some((metric, trainer.epoch));
        }
        writeln!(
            log,
            "epoch epoch={} val_dice_pen={dice_pen} val_dice_core={dice_core} val_metric={metric}",
            trainer.epoch
        )?;
        log.flush()?;
        if let Some(dir) = out_dir {
            save_checkpoint(trainer, &dir.join(CHECKPOINT_LAST))?;
            if improved {
                save_checkpoint(trainer, &dir.join(CHECKPOINT_BEST))?;
            }
        }
        epochs.push(EpochReport {
            epoch: trainer.epoch,
            dice_pen,
            dice_core,
            metric,
            improved,
        });
    }
    Ok(FitOutcome {
        epochs,
        best: trainer.best,
    })
}
