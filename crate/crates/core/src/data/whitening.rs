use crate::tensor::Tensor;

use super::{DataError, Manifest, Volume};

/// Lower bound on a whitening standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-sequence mean and (population) standard deviation over every voxel
/// of the training subjects.
#[derive(Clone, Debug, PartialEq)]
pub struct WhiteningStats {
    pub sequences: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl WhiteningStats {
    /// `volumes[s]` holds every training volume of sequence `s`.
    pub fn from_volumes(sequences: &[String], volumes: &[Vec<Volume>]) -> Result<Self, DataError> {
        if volumes.len() != sequences.len() {
            return Err(DataError::Whitening(format!(
                "{} volume groups for {} sequences",
                volumes.len(),
                sequences.len()
            )));
        }
        let mut mean = Vec::with_capacity(sequences.len());
        let mut std = Vec::with_capacity(sequences.len());
        for (name, vols) in sequences.iter().zip(volumes) {
            let n: usize = vols.iter().map(|v| v.data.len()).sum();
            if n == 0 {
                return Err(DataError::Whitening(format!("no training voxels for `{name}`")));
            }
            let values = || vols.iter().flat_map(|v| v.data.iter().map(|&x| x as f64));
            let m = values().sum::<f64>() / n as f64;
            let var = values().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            mean.push(m);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(WhiteningStats {
            sequences: sequences.to_vec(),
            mean,
            std,
        })
    }

    pub fn whiten(&self, seq: usize, v: f32) -> f32 {
        ((v as f64 - self.mean[seq]) / self.std[seq]) as f32
    }
}

/// Statistics of the manifest's sequences over the listed training subjects.
pub fn compute_whitening(manifest: &Manifest, train_ids: &[String]) -> Result<WhiteningStats, DataError> {
    if train_ids.is_empty() {
        return Err(DataError::Whitening("empty training set".into()));
    }
    let mut groups = vec![Vec::with_capacity(train_ids.len()); manifest.sequences.len()];
    for id in train_ids {
        let rec = manifest.subject(id).ok_or_else(|| DataError::Subject {
            subject: id.clone(),
            detail: "not in manifest".into(),
        })?;
        for (s, seq) in manifest.sequences.iter().enumerate() {
            groups[s].push(Volume::load(&manifest.resolve(&rec.volumes[seq]))?);
        }
    }
    WhiteningStats::from_volumes(&manifest.sequences, &groups)
}

/// Whiten a `B x T x H x W` image in place, channel `t` with sequence `t`.
pub fn apply_whitening(image: &mut Tensor, stats: &WhiteningStats) -> Result<(), DataError> {
    let d = image.dims();
    if d.channels() != stats.sequences.len() {
        return Err(DataError::Whitening(format!(
            "image has {} channels, stats cover {} sequences",
            d.channels(),
            stats.sequences.len()
        )));
    }
    for b in 0..d.batch() {
        for c in 0..d.channels() {
            for v in image.plane_mut(b, c) {
                *v = stats.whiten(c, *v);
            }
        }
    }
    Ok(())
}
