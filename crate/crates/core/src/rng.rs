//! Seeded randomness.
//!
//! All randomness flows from `ChaCha8Rng` (a counter-based generator with a
//! 64-bit block counter and a 64-bit stream id). Sub-computations such as
//! fuzz trials or ALS restarts get their own stream of the caller's seed, so
//! results never depend on scheduling order or platform.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for sub-task `index` of `seed`.
pub fn derived(seed: u64, index: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Fresh 64-bit seed drawn from `rng`.
pub fn child_seed(rng: &mut SeededRng) -> u64 {
    rng.gen()
}

pub fn gaussian(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard complex Gaussian (real and imaginary parts of variance 1/2).
pub fn complex_gaussian(rng: &mut SeededRng) -> Complex64 {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(gaussian(rng) * s, gaussian(rng) * s)
}

/// Matrix of i.i.d. standard complex Gaussians.
pub fn ginibre(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(rows, cols);
    // Fill row-major so that the draw order is layout independent.
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_gaussian(rng);
        }
    }
    m
}

/// Uniform real in `[lo, hi)`.
pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}
