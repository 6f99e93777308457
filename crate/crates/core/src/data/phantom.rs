//! Synthetic stroke phantoms.
//!
//! Each subject is an elliptical brain with an ellipsoidal lesion (penumbra)
//! containing a smaller ellipsoidal core. DWI is raised on the core only;
//! TTP and Tmax are raised on the whole lesion with different contrasts. A
//! smooth multiplicative bias field and Gaussian noise are applied to every
//! sequence.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::rng;

use super::{io_err, DataError, Manifest, Provenance, SubjectRecord, Volume, DEFAULT_SEQUENCES};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomSpec {
    pub subjects: usize,
    pub slices: usize,
    /// Slice height and width.
    pub size: usize,
    pub seed: u64,
    /// Standard deviation of the additive noise.
    pub noise: f32,
    /// DWI elevation on the core, in units of the tissue baseline.
    pub contrast: f32,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            subjects: 30,
            slices: 8,
            size: 96,
            seed: 0,
            noise: 0.2,
            contrast: 1.0,
        }
    }
}

const TISSUE: f32 = 1.0;
/// TTP and Tmax elevation on the lesion, relative to `contrast`.
const TTP_GAIN: f32 = 0.8;
const TMAX_GAIN: f32 = 0.6;
/// Extra Tmax on the core, so the two perfusion maps differ in shape too.
const TMAX_CORE_GAIN: f32 = 0.3;
const BIAS_AMPLITUDE: f32 = 0.1;

struct Ellipsoid {
    cy: f32,
    cx: f32,
    cz: f32,
    ry: f32,
    rx: f32,
    rz: f32,
}

impl Ellipsoid {
    fn contains(&self, z: f32, y: f32, x: f32) -> bool {
        let (dz, dy, dx) = ((z - self.cz) / self.rz, (y - self.cy) / self.ry, (x - self.cx) / self.rx);
        dz * dz + dy * dy + dx * dx <= 1.0
    }
}

pub(crate) struct Subject {
    pub label: Volume,
    pub sequences: [Volume; 3],
}

pub(crate) fn synthesize(spec: &PhantomSpec, index: usize) -> Subject {
    let mut r = rng::stream(spec.seed, &format!("phantom/{index}"));
    let (d, s) = (spec.slices, spec.size);
    let sf = s as f32;
    let brain = Ellipsoid {
        cy: sf / 2.0 + r.gen_range(-0.03..0.03) * sf,
        cx: sf / 2.0 + r.gen_range(-0.03..0.03) * sf,
        cz: 0.0,
        ry: r.gen_range(0.38..0.45) * sf,
        rx: r.gen_range(0.32..0.40) * sf,
        rz: f32::INFINITY,
    };
    // lesion centred well inside the brain, spanning most slices
    let zc = (d as f32 - 1.0) / 2.0 + r.gen_range(-0.15..0.15) * d as f32;
    let lesion = Ellipsoid {
        cy: brain.cy + r.gen_range(-0.15..0.15) * sf,
        cx: brain.cx + r.gen_range(-0.12..0.12) * sf,
        cz: zc,
        ry: r.gen_range(0.12..0.18) * sf,
        rx: r.gen_range(0.12..0.18) * sf,
        rz: 0.6 * d as f32 + 0.5,
    };
    let shrink = r.gen_range(0.4..0.6);
    let core = Ellipsoid {
        cy: lesion.cy + r.gen_range(-0.1..0.1) * lesion.ry,
        cx: lesion.cx + r.gen_range(-0.1..0.1) * lesion.rx,
        cz: zc,
        ry: shrink * lesion.ry,
        rx: shrink * lesion.rx,
        rz: shrink * lesion.rz,
    };
    let phase: [f32; 2] = [r.gen_range(0.0..std::f32::consts::TAU), r.gen_range(0.0..std::f32::consts::TAU)];
    let noise = Normal::new(0.0f32, spec.noise.max(0.0)).expect("finite noise");

    let n = d * s * s;
    let mut label = vec![0.0f32; n];
    let mut seqs = [vec![0.0f32; n], vec![0.0f32; n], vec![0.0f32; n]];
    for z in 0..d {
        for y in 0..s {
            for x in 0..s {
                let i = (z * s + y) * s + x;
                let (zf, yf, xf) = (z as f32, y as f32 + 0.5, x as f32 + 0.5);
                let in_brain = brain.contains(0.0, yf, xf);
                // the core is clipped to the lesion so that core is a subset
                let in_lesion = in_brain && lesion.contains(zf, yf, xf);
                let in_core = in_lesion && core.contains(zf, yf, xf);
                label[i] = if in_core {
                    2.0
                } else if in_lesion {
                    1.0
                } else {
                    0.0
                };
                let base = if in_brain { TISSUE } else { 0.0 };
                let c = spec.contrast;
                let values = [
                    base + if in_core { c } else { 0.0 },
                    base + if in_lesion { TTP_GAIN * c } else { 0.0 },
                    base + if in_lesion { TMAX_GAIN * c } else { 0.0 } + if in_core { TMAX_CORE_GAIN * c } else { 0.0 },
                ];
                let bias = 1.0
                    + BIAS_AMPLITUDE
                        * ((std::f32::consts::PI * yf / sf + phase[0]).sin() * (std::f32::consts::PI * xf / sf + phase[1]).cos());
                for (seq, v) in seqs.iter_mut().zip(values) {
                    seq[i] = v * bias + noise.sample(&mut r);
                }
            }
        }
    }
    let vol = |data| Volume::new(d, s, s, data).expect("dims");
    let [a, b, c] = seqs;
    Subject {
        label: vol(label),
        sequences: [vol(a), vol(b), vol(c)],
    }
}

/// Write `spec.subjects` phantoms under `out` (one directory per subject,
/// PTF volumes) together with `out/manifest.txt`.
pub fn generate_phantoms(spec: &PhantomSpec, out: &Path) -> Result<Manifest, DataError> {
    if spec.subjects == 0 || spec.slices == 0 || spec.size == 0 {
        return Err(DataError::Phantom(format!(
            "subjects, slices and size must be positive (got {}, {}, {})",
            spec.subjects, spec.slices, spec.size
        )));
    }
    if !spec.noise.is_finite() || spec.noise < 0.0 || !spec.contrast.is_finite() {
        return Err(DataError::Phantom(format!("noise {} / contrast {}", spec.noise, spec.contrast)));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut subjects = Vec::with_capacity(spec.subjects);
    for i in 0..spec.subjects {
        let id = format!("S{i:03}");
        let dir = out.join(&id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let subject = synthesize(spec, i);
        let mut volumes = IndexMap::new();
        for (name, vol) in DEFAULT_SEQUENCES.iter().zip(&subject.sequences) {
            let rel = Path::new(&id).join(format!("{name}.ptf"));
            vol.save_ptf(&out.join(&rel))?;
            volumes.insert(name.to_string(), rel);
        }
        let label = Path::new(&id).join("label.ptf");
        subject.label.save_ptf(&out.join(&label))?;
        subjects.push(SubjectRecord {
            id,
            volumes,
            label,
            dims: Some([spec.slices, spec.size, spec.size]),
        });
    }
    let manifest = Manifest {
        provenance: Provenance::Phantom,
        sequences: DEFAULT_SEQUENCES.iter().map(|s| s.to_string()).collect(),
        subjects,
        root: out.to_path_buf(),
    };
    manifest.save(&out.join("manifest.txt"))?;
    Ok(manifest)
}
