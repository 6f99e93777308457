//! Five-phase adversarial training.
//!
//! Per mini-batch: (1) segmentation step on cross-entropy; (2) and (3)
//! update the penumbra and core Turing-test discriminators, each shown the
//! input sequences plus a ground-truth mask and a predicted mask in random
//! slot order and asked which slot holds the truth; (4) update the channel
//! discriminator, which sees the predicted probabilities with channels
//! shuffled and must say where the penumbra went; (5) update the
//! segmentation network on `-(alpha J_D1 + beta J_D2 + gamma J_D3)`,
//! recomputed on fresh pairings and shuffles.

mod batch;
mod checkpoint;
mod config;
mod fit;
mod phases;
mod run;

use thiserror::Error;

use crate::archive::ArchiveError;
use crate::data::DataError;
use crate::evaluation::EvalError;
use crate::networks::NetError;
use crate::optim::OptimError;
use crate::tensor::TensorError;

pub use batch::Batch;
pub use checkpoint::{from_archive, load_checkpoint, save_checkpoint, to_archive, CHECKPOINT_BEST, CHECKPOINT_LAST};
pub use config::{Architecture, TrainConfig, CHECKPOINT_METRIC};
pub use fit::{evaluate_samples, fit, EpochReport, FitData, FitOutcome, SlicePrediction, SubjectPrediction};
pub use run::{folds_for, prepare_fold, train_fold, FoldData};
pub use phases::{adversarial_objective, make_turing_pair, turing_pair_with, AdvLosses, PhaseReport, Trainer, TuringTest};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {loss} = {value} in phase {phase} (epoch {epoch}, batch {batch})")]
    NonFinite {
        phase: u8,
        loss: &'static str,
        value: f64,
        epoch: usize,
        batch: usize,
    },
    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),
    #[error("log sink: {0}")]
    Log(#[from] std::io::Error),
}
