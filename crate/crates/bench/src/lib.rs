//! Seeded inputs shared by the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Integer counts in `0..max` for a `hours x rows x cols` cube.
pub fn count_frames(hours: usize, rows: usize, cols: usize, max: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..hours * rows * cols).map(|_| f64::from(rng.gen_range(0..max))).collect()
}

/// AR(1) series `x_t = phi x_{t-1} + e_t` with uniform innovations.
pub fn ar1_series(n: usize, phi: f64, seed: u64) -> Vec<f64> {
    let e = uniform_vec(n, seed);
    let mut x = Vec::with_capacity(n);
    let mut prev = 0.0;
    for v in e {
        prev = phi * prev + v;
        x.push(prev);
    }
    x
}
