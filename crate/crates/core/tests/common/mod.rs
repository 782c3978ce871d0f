#![allow(dead_code)]

use ddpc::lti::{random_system, LtiSystem};
use ddpc::matops::{Matrix, Vector};
use ddpc::task::ControlTask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn system(order: usize, rng: &mut ChaCha8Rng) -> LtiSystem {
    random_system(order, rng, 1000).unwrap()
}

pub fn normal_vector(len: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Positive per-step weights in `[0.1, 3)` and a reference in `[-2, 2)`.
pub fn task(horizon: usize, rng: &mut ChaCha8Rng) -> ControlTask {
    let q = (0..horizon).map(|_| rng.random_range(0.1..3.0)).collect();
    let r = (0..horizon).map(|_| rng.random_range(0.1..3.0)).collect();
    ControlTask::new(q, r, rng.random_range(-2.0..2.0)).unwrap()
}
