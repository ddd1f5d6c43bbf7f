#![allow(dead_code)]

use alphasne::{NeighborProbabilities, ProbabilityKind};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-stochastic matrix with zero diagonal and log-normal entries.
pub fn random_input(n: usize, rng: &mut ChaCha8Rng) -> NeighborProbabilities {
    let normal = Normal::new(0.0_f64, 1.5).unwrap();
    let mut m = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { normal.sample(rng).exp() });
    for mut row in m.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    NeighborProbabilities::new(m, ProbabilityKind::Input).unwrap()
}

pub fn random_coords(n: usize, d: usize, std: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, std).unwrap();
    Array2::from_shape_simple_fn((n, d), || normal.sample(rng))
}

/// Random probability vector of length `n` with entries bounded away from 0.
pub fn random_distribution(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// `k` well separated Gaussian clusters of `per` points each in `dim`
/// dimensions, with labels.
pub fn clusters(k: usize, per: usize, dim: usize, spread: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<usize>) {
    let normal = Normal::new(0.0, spread).unwrap();
    let n = k * per;
    let mut data = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for p in 0..per {
            let i = c * per + p;
            for d in 0..dim {
                let center = if d == c % dim { 10.0 * (1 + c / dim) as f64 } else { 0.0 };
                data[[i, d]] = center + normal.sample(rng);
            }
            labels.push(c);
        }
    }
    (data, labels)
}
