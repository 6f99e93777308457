//! Per-class overlay images: red = missed (truth only), green = spurious
//! (prediction only), white = agreement, black = neither.

use std::fs;
use std::path::Path;

use super::EvalError;

pub const RED: [u8; 3] = [255, 0, 0];
pub const GREEN: [u8; 3] = [0, 255, 0];
pub const WHITE: [u8; 3] = [255, 255, 255];
pub const BLACK: [u8; 3] = [0, 0, 0];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ppm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Ppm {
    /// Binary `P6` encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EvalError> {
        let bad = || EvalError::Parse("PPM header".into());
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad());
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?);
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad());
        }
        let width: usize = fields[1].parse().map_err(|_| bad())?;
        let height: usize = fields[2].parse().map_err(|_| bad())?;
        let body = &bytes[pos + 1..];
        if body.len() != 3 * width * height {
            return Err(EvalError::Parse(format!("PPM body of {} bytes for {width}x{height}", body.len())));
        }
        Ok(Ppm {
            width,
            height,
            pixels: body.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }

    pub fn count(&self, colour: [u8; 3]) -> usize {
        self.pixels.iter().filter(|&&p| p == colour).count()
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.to_bytes()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn render_overlay(pred: &[u8], gt: &[u8], height: usize, width: usize, class: u8) -> Result<Ppm, EvalError> {
    if pred.len() != gt.len() || pred.len() != height * width {
        return Err(EvalError::Shape(format!(
            "overlay of {height}x{width} from {} predicted and {} true pixels",
            pred.len(),
            gt.len()
        )));
    }
    let pixels = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| match (p == class, g == class) {
            (true, true) => WHITE,
            (false, true) => RED,
            (true, false) => GREEN,
            (false, false) => BLACK,
        })
        .collect();
    Ok(Ppm { width, height, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_categories() {
        let gt = [1, 1, 0, 0];
        let pred = [1, 0, 1, 0];
        let img = render_overlay(&pred, &gt, 2, 2, 1).unwrap();
        assert_eq!(img.pixels, vec![WHITE, RED, GREEN, BLACK]);
        let bytes = img.to_bytes();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        assert_eq!(Ppm::from_bytes(&bytes).unwrap(), img);
    }

    #[test]
    fn rejects_mismatch() {
        assert!(render_overlay(&[0; 3], &[0; 4], 2, 2, 1).is_err());
    }
}
