#![allow(dead_code)]

use bham::sim::{generate_replicate, variable_names, SimConfig, SimData};
use bham::{Dataset, Family, ModelFrame, SmoothSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn cubic_specs(p: usize) -> Vec<SmoothSpec> {
    variable_names(p).into_iter().map(|n| SmoothSpec::cubic(n, 10)).collect()
}

pub fn sim(p: usize, family: Family, seed: u64, replicate: u64) -> SimData {
    generate_replicate(&SimConfig::new(p, family, seed), replicate).unwrap()
}

/// Pure-noise predictors and response.
pub fn noise_data(seed: u64, n: usize, p: usize) -> (Dataset, Vec<f64>) {
    let mut r = rng(seed);
    let cols: Vec<Vec<f64>> = (0..p).map(|_| normal_vec(&mut r, n)).collect();
    let y = normal_vec(&mut r, n);
    (Dataset::new(variable_names(p), cols).unwrap(), y)
}

pub fn frame_for(data: &Dataset, p: usize) -> ModelFrame {
    ModelFrame::from_data(data, &cubic_specs(p)).unwrap()
}

/// Unpenalized least squares with an intercept column prepended.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> (nalgebra::DVector<f64>, DMatrix<f64>) {
    let xa = x.clone().insert_column(0, 1.0);
    let yv = nalgebra::DVector::from_column_slice(y);
    let xtx = xa.transpose() * &xa;
    let inv = xtx.clone().try_inverse().unwrap();
    let beta = &inv * (xa.transpose() * yv);
    (beta, inv)
}
