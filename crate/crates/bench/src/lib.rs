//! Seeded inputs for the benchmarks.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `rows x cols` matrix of iid standard normals.
pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Panel with `r` strong factors plus unit noise, series in rows.
pub fn factor_panel(n: usize, t: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let lambda = gaussian(n, r, seed);
    let f = gaussian(t, r, seed + 1);
    lambda * f.transpose() + gaussian(n, t, seed + 2)
}

/// Sparse linear response `y = x_1 + 0.5 x_2 + noise`.
pub fn sparse_response(x: &DMatrix<f64>, seed: u64) -> Vec<f64> {
    let noise = gaussian(x.nrows(), 1, seed);
    (0..x.nrows())
        .map(|t| x[(t, 0)] + 0.5 * x[(t, 1)] + noise[(t, 0)])
        .collect()
}
