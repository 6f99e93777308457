use std::sync::Arc;

use crate::networks::SPATIAL_MULTIPLE;
use crate::tensor::{Dims, Tensor};

use super::{DataError, Manifest, Volume, WhiteningStats};

/// Symmetric zero padding of one slice up to a multiple of 32, with the
/// extra row / column (odd totals) going to the bottom / right.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Padding {
    pub height: usize,
    pub width: usize,
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

pub fn pad_for(height: usize, width: usize) -> Padding {
    let up = |n: usize| n.div_ceil(SPATIAL_MULTIPLE).max(1) * SPATIAL_MULTIPLE;
    let (th, tw) = (up(height) - height, up(width) - width);
    Padding {
        height,
        width,
        top: th / 2,
        bottom: th - th / 2,
        left: tw / 2,
        right: tw - tw / 2,
    }
}

impl Padding {
    pub fn padded(&self) -> (usize, usize) {
        (self.height + self.top + self.bottom, self.width + self.left + self.right)
    }

    pub fn pad<T: Copy>(&self, plane: &[T], fill: T) -> Vec<T> {
        assert_eq!(plane.len(), self.height * self.width, "plane size");
        let (ph, pw) = self.padded();
        let mut out = vec![fill; ph * pw];
        for y in 0..self.height {
            let dst = (y + self.top) * pw + self.left;
            out[dst..dst + self.width].copy_from_slice(&plane[y * self.width..(y + 1) * self.width]);
        }
        out
    }

    pub fn unpad<T: Copy>(&self, padded: &[T]) -> Vec<T> {
        let (ph, pw) = self.padded();
        assert_eq!(padded.len(), ph * pw, "padded plane size");
        let mut out = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            let src = (y + self.top) * pw + self.left;
            out.extend_from_slice(&padded[src..src + self.width]);
        }
        out
    }
}

/// One axial slice ready for the network.
#[derive(Clone, Debug)]
pub struct SliceSample {
    pub subject: String,
    pub z: usize,
    /// Whitened, padded `1 x T x H' x W'` image.
    pub image: Tensor,
    /// Padded label plane (padding is background).
    pub label: Arc<[u8]>,
    pub padding: Padding,
}

fn label_plane(subject: &str, z: usize, plane: &[f32]) -> Result<Vec<u8>, DataError> {
    plane
        .iter()
        .map(|&v| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            2.0 => Ok(2),
            other => Err(DataError::Subject {
                subject: subject.to_string(),
                detail: format!("label value {other} in slice {z} is not 0, 1 or 2"),
            }),
        })
        .collect()
}

/// Every slice of every listed subject, in manifest order then slice order.
pub fn extract_slices(manifest: &Manifest, ids: &[String], stats: &WhiteningStats) -> Result<Vec<SliceSample>, DataError> {
    if stats.sequences != manifest.sequences {
        return Err(DataError::Whitening(format!(
            "stats cover {:?}, manifest uses {:?}",
            stats.sequences, manifest.sequences
        )));
    }
    let mut out = Vec::new();
    for rec in manifest.subjects.iter().filter(|s| ids.contains(&s.id)) {
        let label = Volume::load(&manifest.resolve(&rec.label))?;
        let mismatch = |what: &str, dims: [usize; 3]| DataError::Subject {
            subject: rec.id.clone(),
            detail: format!("{what} has dims {dims:?}, label has {:?}", label.dims()),
        };
        if let Some(d) = rec.dims {
            if d != label.dims() {
                return Err(mismatch("manifest entry", d));
            }
        }
        let seqs = manifest
            .sequences
            .iter()
            .map(|s| {
                let v = Volume::load(&manifest.resolve(&rec.volumes[s]))?;
                if v.dims() != label.dims() {
                    return Err(mismatch(s, v.dims()));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pad = pad_for(label.height, label.width);
        let (ph, pw) = pad.padded();
        for z in 0..label.depth {
            let mut data = Vec::with_capacity(seqs.len() * ph * pw);
            for (c, v) in seqs.iter().enumerate() {
                let whitened: Vec<f32> = v.slice(z).iter().map(|&x| stats.whiten(c, x)).collect();
                data.extend(pad.pad(&whitened, 0.0));
            }
            let lab = label_plane(&rec.id, z, label.slice(z))?;
            out.push(SliceSample {
                subject: rec.id.clone(),
                z,
                image: Tensor::from_vec(Dims::new(1, seqs.len(), ph, pw), data).expect("dims"),
                label: pad.pad(&lab, 0).into(),
                padding: pad,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_arithmetic() {
        let p = pad_for(94, 110);
        assert_eq!(p.padded(), (96, 128));
        assert_eq!(((p.top, p.bottom), (p.left, p.right)), ((1, 1), (9, 9)));
        assert_eq!(pad_for(96, 96).padded(), (96, 96));
        let odd = pad_for(31, 1);
        assert_eq!((odd.top, odd.bottom, odd.left, odd.right), (0, 1, 15, 16));
    }

    #[test]
    fn unpad_inverts_pad() {
        let p = pad_for(5, 7);
        let plane: Vec<u16> = (0..35).collect();
        let padded = p.pad(&plane, 999);
        assert_eq!(padded.len(), 32 * 32);
        assert_eq!(padded.iter().filter(|&&v| v == 999).count(), 32 * 32 - 35);
        assert_eq!(p.unpad(&padded), plane);
    }
}
