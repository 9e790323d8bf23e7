#![allow(dead_code)]

use nalgebra::DMatrix;
use noncobf::array_channel::{PhaseModel, SignatureSet};
use noncobf::mu::{MultiUserScenario, UserChannel};
use noncobf::{CMatrix, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const CARRIER: f64 = 3.5e9;

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn signatures(rng: &mut ChaCha8Rng, n: usize, l: usize) -> SignatureSet {
    SignatureSet::new(randn(rng, n, l), CARRIER).unwrap()
}

/// Random valid correlation matrix: a normalized Gram matrix of `rank`
/// dimensional vectors.
pub fn correlation(rng: &mut ChaCha8Rng, l: usize, rank: usize) -> CMatrix {
    let x = randn(rng, l, rank);
    let gram = &x * x.adjoint();
    DMatrix::from_fn(l, l, |i, j| {
        if i == j {
            C64::new(1.0, 0.0)
        } else {
            gram[(i, j)] / (gram[(i, i)].re * gram[(j, j)].re).sqrt()
        }
    })
}

/// `K` users with i.i.d. uniform phases and random signatures.
pub fn iid_scenario(rng: &mut ChaCha8Rng, n: usize, paths: &[usize], sigma2: f64) -> MultiUserScenario {
    let users = paths
        .iter()
        .map(|&l| UserChannel {
            signatures: signatures(rng, n, l),
            phase_model: PhaseModel::IidUniform,
        })
        .collect();
    MultiUserScenario::new(users, vec![1.0; paths.len()], sigma2).unwrap()
}
