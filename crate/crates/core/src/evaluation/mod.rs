//! Per-class metrics, fold aggregation, report tables and overlays.
//!
//! Classes are 0 background, 1 penumbra, 2 core. Counts are one-vs-rest for
//! penumbra and core; a subject's counts are summed over all its slices
//! before any ratio is taken.

mod overlay;
mod report;

use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Tensor;

pub use overlay::{render_overlay, Ppm, BLACK, GREEN, RED, WHITE};
pub use report::{aggregate, emit_report, Cell, FoldSummary, ReportFormat, ReportRow, ReportTable, CSV_HEADER, METRIC_COLUMNS};

/// Foreground classes scored by the metrics.
pub const CLASSES: [u8; 2] = [1, 2];
pub const CLASS_NAMES: [&str; 2] = ["penumbra", "core"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid label {0}")]
    Label(u8),
    #[error("{0}")]
    Empty(String),
    #[error("cannot parse {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Per-pixel argmax over channels of a `B x C x H x W` probability tensor,
/// ties resolved toward the lower class. Output is batch-major, row-major.
pub fn argmax_labels(probs: &Tensor) -> Vec<u8> {
    let [b, c, _, _] = probs.dims().0;
    let p = probs.dims().plane();
    let data = probs.data();
    let mut out = Vec::with_capacity(b * p);
    for bi in 0..b {
        let base = bi * c * p;
        for i in 0..p {
            let mut best = 0;
            for ci in 1..c {
                if data[base + ci * p + i] > data[base + best * p + i] {
                    best = ci;
                }
            }
            out.push(best as u8);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn gt_empty(&self) -> bool {
        self.tp + self.fn_ == 0
    }

    fn pred_empty(&self) -> bool {
        self.tp + self.fp == 0
    }

    /// `2TP / (2TP + FP + FN)`; 1 when prediction and truth are both empty.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    /// `TP / (TP + FP)`; 1 when both are empty, 0 when only the prediction is.
    pub fn precision(&self) -> f64 {
        match (self.pred_empty(), self.gt_empty()) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            _ => self.tp as f64 / (self.tp + self.fp) as f64,
        }
    }

    /// `TP / (TP + FN)`; 1 when both are empty, 0 when only the truth is.
    pub fn recall(&self) -> f64 {
        match (self.gt_empty(), self.pred_empty()) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            _ => self.tp as f64 / (self.tp + self.fn_) as f64,
        }
    }

    pub fn add(&mut self, other: &ClassCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// One-vs-rest counts for penumbra (`classes[0]`) and core (`classes[1]`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub classes: [ClassCounts; 2],
}

impl ConfusionCounts {
    pub fn add(&mut self, other: &ConfusionCounts) {
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.add(b);
        }
    }

    pub fn penumbra(&self) -> &ClassCounts {
        &self.classes[0]
    }

    pub fn core(&self) -> &ClassCounts {
        &self.classes[1]
    }
}

pub fn confusion(pred: &[u8], gt: &[u8]) -> Result<ConfusionCounts, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::Shape(format!("{} predicted vs {} true voxels", pred.len(), gt.len())));
    }
    if let Some(&bad) = pred.iter().chain(gt).find(|&&v| v > 2) {
        return Err(EvalError::Label(bad));
    }
    let mut out = ConfusionCounts::default();
    for (k, &c) in CLASSES.iter().enumerate() {
        let counts = &mut out.classes[k];
        for (&p, &g) in pred.iter().zip(gt) {
            match (p == c, g == c) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
    }
    Ok(out)
}

/// Dice, precision and recall of one subject, per foreground class.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectMetrics {
    pub subject: String,
    pub counts: ConfusionCounts,
}

impl SubjectMetrics {
    /// `[dice_pen, dice_core, prec_pen, prec_core, rec_pen, rec_core]`.
    pub fn row(&self) -> [f64; 6] {
        let [p, c] = &self.counts.classes;
        [p.dice(), c.dice(), p.precision(), c.precision(), p.recall(), c.recall()]
    }
}
