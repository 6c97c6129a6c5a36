#![allow(dead_code)]

use krondpp::linalg::{Matrix, SpdMatrix};
use krondpp::sampling::{KronSampler, RngStream};
use krondpp::{KronKernel, Subset, TrainingSet};

/// Well-conditioned random SPD matrix `XᵀX/n + shift·I`.
pub fn random_spd(n: usize, shift: f64, rng: &mut RngStream) -> SpdMatrix {
    let x = Matrix::from_fn(n, n, |_, _| rng.uniform() * 2.0 - 1.0);
    SpdMatrix::new(x.transpose() * x / n as f64 + Matrix::identity(n, n) * shift).unwrap()
}

pub fn random_pair(n1: usize, n2: usize, rng: &mut RngStream) -> KronKernel {
    KronKernel::pair(random_spd(n1, 0.3, rng), random_spd(n2, 0.3, rng))
}

/// Uniformly random non-empty subset of size in `1..=max`.
pub fn random_subset(n: usize, max: usize, rng: &mut RngStream) -> Subset {
    let size = 1 + (rng.uniform() * max.min(n) as f64) as usize;
    let mut items: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = i + (rng.uniform() * (n - i) as f64) as usize;
        items.swap(i, j);
    }
    items.truncate(size);
    Subset::new(items, n).unwrap()
}

pub fn random_training(n: usize, count: usize, max: usize, rng: &mut RngStream) -> TrainingSet {
    TrainingSet::new(n, (0..count).map(|_| random_subset(n, max, rng)).collect()).unwrap()
}

/// Non-empty exact samples from `k`.
pub fn sampled_training(k: &KronKernel, count: usize, rng: &mut RngStream) -> TrainingSet {
    let s = KronSampler::new(k).unwrap();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let y = s.sample(rng).unwrap().subset;
        if !y.is_empty() {
            out.push(y);
        }
    }
    TrainingSet::new(k.size(), out).unwrap()
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
