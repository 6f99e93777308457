//! Per-pixel counting oracle for segmentation metrics and overlays.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokeseg::evaluation::{confusion, render_overlay, BLACK, GREEN, RED, WHITE};

pub const SIDE: usize = 16;

/// (tp, fp, fn, tn) for one class, one pixel at a time.
pub fn count(pred: &[u8], gt: &[u8], class: u8) -> [u64; 4] {
    let mut c = [0u64; 4];
    for i in 0..pred.len() {
        let p = pred[i] == class;
        let g = gt[i] == class;
        let slot = match (p, g) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        c[slot] += 1;
    }
    c
}

/// Dice, precision, recall from counts with the empty-set conventions.
pub fn ratios(c: [u64; 4]) -> [f64; 3] {
    let [tp, fp, fn_, _] = c.map(|v| v as f64);
    let both_empty = tp + fp + fn_ == 0.0;
    let div = |n: f64, d: f64| if d == 0.0 { if both_empty { 1.0 } else { 0.0 } } else { n / d };
    [div(2.0 * tp, 2.0 * tp + fp + fn_), div(tp, tp + fp), div(tp, tp + fn_)]
}

/// Random label map with a random background fraction, so empty classes
/// show up.
pub fn random_map(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    let bg = rng.gen_range(0.0..1.0);
    (0..n)
        .map(|_| if rng.gen_bool(bg) { 0 } else { rng.gen_range(1..3) })
        .collect()
}

#[derive(Debug, Default)]
pub struct MetricCheck {
    pub pairs: usize,
    pub count_mismatches: usize,
    pub max_ratio_err: f64,
}

impl MetricCheck {
    pub fn passed(&self) -> bool {
        self.count_mismatches == 0 && self.max_ratio_err <= 1e-12
    }
}

/// Library counts and ratios against the oracle on random `SIDE x SIDE` pairs.
pub fn metric_check(seed: u64, pairs: usize) -> MetricCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MetricCheck {
        pairs,
        ..Default::default()
    };
    for _ in 0..pairs {
        let pred = random_map(&mut rng, SIDE * SIDE);
        let gt = random_map(&mut rng, SIDE * SIDE);
        let lib = confusion(&pred, &gt).expect("valid maps");
        for (k, class) in [1u8, 2].into_iter().enumerate() {
            let c = &lib.classes[k];
            let want = count(&pred, &gt, class);
            if [c.tp, c.fp, c.fn_, c.tn] != want {
                out.count_mismatches += 1;
            }
            let got = [c.dice(), c.precision(), c.recall()];
            for (a, b) in got.iter().zip(ratios(want)) {
                out.max_ratio_err = out.max_ratio_err.max((a - b).abs());
            }
        }
    }
    out
}

/// Colour a pixel by hand from the overlay rule table.
pub fn overlay_colour(pred: u8, gt: u8, class: u8) -> [u8; 3] {
    match (gt == class, pred == class) {
        (true, false) => RED,
        (false, true) => GREEN,
        (true, true) => WHITE,
        (false, false) => BLACK,
    }
}

/// Pairs whose rendered overlay disagrees with the pixel rule or whose
/// white/red/green counts differ from TP/FN/FP.
pub fn overlay_check(seed: u64, pairs: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..pairs {
        let pred = random_map(&mut rng, SIDE * SIDE);
        let gt = random_map(&mut rng, SIDE * SIDE);
        let mut ok = true;
        for class in [1u8, 2] {
            let img = render_overlay(&pred, &gt, SIDE, SIDE, class).expect("valid maps");
            let [tp, fp, fn_, _] = count(&pred, &gt, class);
            ok &= img.count(WHITE) as u64 == tp && img.count(RED) as u64 == fn_ && img.count(GREEN) as u64 == fp;
            ok &= img
                .pixels
                .iter()
                .zip(pred.iter().zip(&gt))
                .all(|(px, (&p, &g))| *px == overlay_colour(p, g, class));
        }
        if !ok {
            bad += 1;
        }
    }
    bad
}
