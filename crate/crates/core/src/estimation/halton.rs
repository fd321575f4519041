//! Randomly shifted Halton draws mapped to standard normal deviates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Leading sequence points discarded before the first respondent's block.
const BURN_IN: u64 = 10;

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    value
}

/// Standard normal draws laid out respondent-major, then draw, then
/// dimension. Respondent `r` uses sequence points
/// `BURN_IN + r·n_draws .. BURN_IN + (r+1)·n_draws`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalDraws {
    pub n_respondents: usize,
    pub n_draws: usize,
    pub dim: usize,
    values: Vec<f64>,
}

impl NormalDraws {
    pub fn new(n_respondents: usize, n_draws: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim > PRIMES.len() {
            return Err(Error::InvalidParameter {
                name: "dim",
                value: dim as f64,
                reason: "at most 16 Halton dimensions are supported",
            });
        }
        if n_draws == 0 {
            return Err(Error::InvalidParameter {
                name: "n_draws",
                value: 0.0,
                reason: "need at least one draw",
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let normal = Normal::standard();
        let mut values = Vec::with_capacity(n_respondents * n_draws * dim);
        for i in 0..(n_respondents * n_draws) as u64 {
            for (k, shift) in shifts.iter().enumerate() {
                let mut u = radical_inverse(BURN_IN + i, PRIMES[k]) + shift;
                if u >= 1.0 {
                    u -= 1.0;
                }
                let u = u.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
                values.push(normal.inverse_cdf(u));
            }
        }
        Ok(Self { n_respondents, n_draws, dim, values })
    }

    /// Deviates of draw `d` for respondent `r`.
    pub fn get(&self, r: usize, d: usize) -> &[f64] {
        let start = (r * self.n_draws + d) * self.dim;
        &self.values[start..start + self.dim]
    }
}
