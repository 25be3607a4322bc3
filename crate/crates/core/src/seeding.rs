//! Seeded random streams. Every stochastic component draws from its own
//! ChaCha stream derived from a run seed, so results do not depend on the
//! order in which components are constructed.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// Named streams used across the crate.
pub mod stream {
    pub const VISUAL_INIT: u64 = 1;
    pub const MOTOR_INIT: u64 = 2;
    pub const VISUAL_H0: u64 = 3;
    pub const MOTOR_H0: u64 = 4;
    pub const TRAIN_VISUAL: u64 = 5;
    pub const TRAIN_MOTOR: u64 = 6;
    pub const DATA_SPLIT: u64 = 7;
    pub const SYNTH: u64 = 8;
    pub const PERTURBATION: u64 = 9;
    pub const IMPAIRMENT: u64 = 10;
    pub const BASELINE: u64 = 11;
    pub const SANDBOX: u64 = 12;
    pub const BABBLING: u64 = 13;
    pub const RNNFM: u64 = 14;
}

pub fn rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal_vector(rng: &mut Rng, len: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}

pub fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    // Filled row-major so the draw order matches the checkpoint layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, j)] = z * std;
        }
    }
    m
}
