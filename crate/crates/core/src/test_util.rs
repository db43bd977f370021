//! Deterministic random tensors for tests and gradient checks.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Element, Shape, Tensor};

/// Uniform random tensor in [-1, 1), reproducible from `seed`.
pub fn rand_tensor<T: Element>(shape: Shape, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(-1.0f64, 1.0);
    let data = (0..shape.len())
        .map(|_| T::from_f64(dist.sample(&mut rng)))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches by construction")
}

/// Uniform random vector in [-1, 1), reproducible from `seed`.
pub fn rand_vec<T: Element>(len: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 0x9e37);
    let dist = Uniform::new(-1.0f64, 1.0);
    (0..len).map(|_| T::from_f64(dist.sample(&mut rng))).collect()
}

/// Uniform random tensor in (lo, hi), reproducible from `seed`.
pub fn rand_tensor_in<T: Element>(shape: Shape, lo: f64, hi: f64, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(lo, hi);
    let data = (0..shape.len())
        .map(|_| T::from_f64(dist.sample(&mut rng)))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches by construction")
}
