use std::io::Write;
use std::path::Path;

use crate::data::{compute_whitening, extract_slices, make_folds, FoldSplit, Manifest, SliceSample, WhiteningStats, NUM_FOLDS};

use super::{fit, FitData, FitOutcome, TrainConfig, TrainError, Trainer};

/// Slices of one cross-validation fold, whitened with statistics of its
/// training subjects.
pub struct FoldData {
    pub split: FoldSplit,
    pub stats: WhiteningStats,
    pub train: Vec<SliceSample>,
    pub val: Vec<SliceSample>,
    pub test: Vec<SliceSample>,
}

impl FoldData {
    pub fn slices(&self, split: &str) -> Option<&[SliceSample]> {
        match split {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// The three folds of `manifest` under the configured seed and policy.
pub fn folds_for(manifest: &Manifest, cfg: &TrainConfig) -> Result<[FoldSplit; NUM_FOLDS], TrainError> {
    Ok(make_folds(&manifest.ids(), cfg.seed, cfg.fold_policy)?)
}

/// Split, whiten and slice fold `fold`. With `stats`, those statistics are
/// used instead of recomputing them (e.g. the ones stored in a checkpoint).
pub fn prepare_fold(
    manifest: &Manifest,
    cfg: &TrainConfig,
    fold: usize,
    stats: Option<WhiteningStats>,
) -> Result<FoldData, TrainError> {
    if fold >= NUM_FOLDS {
        return Err(TrainError::Config(format!("fold must be below {NUM_FOLDS}, got {fold}")));
    }
    if manifest.sequences.len() != cfg.in_channels {
        return Err(TrainError::Config(format!(
            "manifest lists {} sequences but in_channels = {}",
            manifest.sequences.len(),
            cfg.in_channels
        )));
    }
    let split = folds_for(manifest, cfg)?[fold].clone();
    let stats = match stats {
        Some(s) => s,
        None => compute_whitening(manifest, &split.train)?,
    };
    Ok(FoldData {
        train: extract_slices(manifest, &split.train, &stats)?,
        val: extract_slices(manifest, &split.val, &stats)?,
        test: extract_slices(manifest, &split.test, &stats)?,
        split,
        stats,
    })
}

/// Train a fresh model on one fold.
pub fn train_fold(
    cfg: &TrainConfig,
    data: &FoldData,
    fold: usize,
    out_dir: Option<&Path>,
    log: &mut dyn Write,
) -> Result<(Trainer, FitOutcome), TrainError> {
    let mut trainer = Trainer::new(cfg.clone())?;
    trainer.whitening = Some(data.stats.clone());
    trainer.fold = Some(fold);
    let outcome = fit(
        &mut trainer,
        FitData {
            train: &data.train,
            val: &data.val,
        },
        out_dir,
        log,
    )?;
    Ok((trainer, outcome))
}
