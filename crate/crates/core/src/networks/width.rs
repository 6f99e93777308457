use std::fmt;
use std::str::FromStr;

/// Rational channel-width multiplier in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WidthMultiplier {
    num: u32,
    den: u32,
}

impl WidthMultiplier {
    pub const FULL: WidthMultiplier = WidthMultiplier { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Option<Self> {
        if num == 0 || den == 0 || num > den {
            return None;
        }
        let g = gcd(num, den);
        Some(WidthMultiplier {
            num: num / g,
            den: den / g,
        })
    }

    /// `channels * self`, rounded to nearest, at least 1.
    pub fn scale(&self, channels: usize) -> usize {
        let (n, d) = (self.num as usize, self.den as usize);
        ((2 * channels * n + d) / (2 * d)).max(1)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Default for WidthMultiplier {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for WidthMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for WidthMultiplier {
    type Err = String;

    /// Accepts `1`, `1/4` or a decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("width multiplier `{s}` must be a rational in (0, 1]");
        let (num, den) = if let Some((n, d)) = s.split_once('/') {
            (
                n.trim().parse::<u32>().map_err(|_| bad())?,
                d.trim().parse::<u32>().map_err(|_| bad())?,
            )
        } else if let Some((int, frac)) = s.split_once('.') {
            if frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let den = 10u32.pow(frac.len() as u32);
            let int: u32 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let frac_v: u32 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
            (int * den + frac_v, den)
        } else {
            (s.parse::<u32>().map_err(|_| bad())?, 1)
        };
        WidthMultiplier::new(num, den).ok_or_else(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        let q: WidthMultiplier = "1/4".parse().unwrap();
        assert_eq!(q, "0.25".parse().unwrap());
        assert_eq!(q.to_string(), "1/4");
        assert_eq!("2/8".parse::<WidthMultiplier>().unwrap(), q);
        assert_eq!("1".parse::<WidthMultiplier>().unwrap(), WidthMultiplier::FULL);
        for bad in ["0", "5/4", "x", "1/0", "-1", "1.5"] {
            assert!(bad.parse::<WidthMultiplier>().is_err(), "{bad}");
        }
    }

    #[test]
    fn scales_with_floor_of_one() {
        let q: WidthMultiplier = "1/4".parse().unwrap();
        assert_eq!(q.scale(64), 16);
        assert_eq!(q.scale(512), 128);
        assert_eq!(WidthMultiplier::new(1, 64).unwrap().scale(3), 1);
        assert_eq!(WidthMultiplier::FULL.scale(256), 256);
    }
}
