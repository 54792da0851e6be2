//! Seeded low-discrepancy points in the unit square (the additive R2 sequence).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plastic number: the real root of `x^3 = x + 1`.
const PLASTIC: f64 = 1.324_717_957_244_746;

#[derive(Debug, Clone, Copy)]
pub struct R2 {
    offset: [f64; 2],
}

impl R2 {
    /// The seed only picks a random shift of the sequence.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            offset: [rng.gen(), rng.gen()],
        }
    }

    pub fn point(&self, i: u64) -> [f64; 2] {
        let a = [1.0 / PLASTIC, 1.0 / (PLASTIC * PLASTIC)];
        let n = (i + 1) as f64;
        [
            (self.offset[0] + n * a[0]).fract(),
            (self.offset[1] + n * a[1]).fract(),
        ]
    }

    pub fn points(&self, count: usize) -> Vec<[f64; 2]> {
        (0..count as u64).map(|i| self.point(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_the_square_evenly() {
        let pts = R2::new(7).points(4096);
        let mut bins = [0usize; 16];
        for [x, y] in &pts {
            assert!((0.0..1.0).contains(x) && (0.0..1.0).contains(y));
            bins[(x * 4.0) as usize * 4 + (y * 4.0) as usize] += 1;
        }
        for b in bins {
            assert!((b as i64 - 256).abs() <= 8, "{bins:?}");
        }
    }

    #[test]
    fn seeds_shift_the_sequence() {
        assert_eq!(R2::new(1).point(5), R2::new(1).point(5));
        assert_ne!(R2::new(1).point(5), R2::new(2).point(5));
    }
}
