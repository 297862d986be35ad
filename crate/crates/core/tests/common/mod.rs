#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use gradcomp::rng::{Purpose, StreamKey};
use gradcomp::workload::{partition_uniform, synthetic_sparse_binary, LossConfig, Shard};

pub fn rng(seed: u64) -> ChaCha8Rng {
    StreamKey::new(seed, Purpose::Test, 0, 0).stream()
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller; good enough for test data.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn gaussian_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| gaussian(rng)).collect()
}

/// Small sparse binary problem split over `agents`.
pub fn toy_problem(samples: usize, dim: usize, agents: usize, seed: u64) -> (Vec<Shard>, LossConfig) {
    let data = synthetic_sparse_binary(samples, dim, 0.2, 0.5, seed).unwrap();
    let shards = partition_uniform(Arc::new(data), agents).unwrap();
    (shards, LossConfig::new(0.01, agents).unwrap())
}

/// Per-sample logistic gradient written out densely, independent of the
/// library kernels.
pub fn dense_local_gradient(x: &[f64], shard: &Shard, loss: &LossConfig) -> Vec<f64> {
    let k = loss.agents as f64;
    let mut g: Vec<f64> = x.iter().map(|v| 2.0 * loss.lambda * v).collect();
    for (u, y) in shard.samples() {
        let z: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
        let w = -y / (1.0 + (y * z).exp()) / k;
        for (gi, ui) in g.iter_mut().zip(u) {
            *gi += w * ui;
        }
    }
    g
}

pub fn dense_global_gradient(x: &[f64], shards: &[Shard], loss: &LossConfig) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for s in shards {
        for (a, b) in g.iter_mut().zip(dense_local_gradient(x, s, loss)) {
            *a += b;
        }
    }
    g
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
