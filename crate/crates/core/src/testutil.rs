use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg;
use crate::matrix::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(r)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn orthogonal(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    linalg::orthonormal_columns(&gaussian(r, n, n)).unwrap()
}
