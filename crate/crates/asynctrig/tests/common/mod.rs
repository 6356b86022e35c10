#![allow(dead_code)]

use asynctrig::linalg::{matrix, spectral_radius, Matrix};
use asynctrig::{DiscretePlant, PlantModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// `Σ_{k<terms} (At)^k / k!`, the reference exponential.
pub fn taylor_exp(a: &Matrix, t: f64, terms: usize) -> Matrix {
    let n = a.nrows();
    let at = a * t;
    let mut term = Matrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..terms {
        term = &term * &at / k as f64;
        sum += &term;
    }
    sum
}

/// Random matrix rescaled to spectral radius `radius`.
pub fn random_schur(rng: &mut impl Rng, n: usize, radius: f64) -> Matrix {
    loop {
        let m = random_matrix(rng, n, n, 1.0);
        let r = spectral_radius(&m).unwrap();
        if r > 1e-3 {
            return m * (radius / r);
        }
    }
}

/// Random two-state single-input plant with two scalar sensors and a
/// gain placing the continuous closed-loop poles in `[-3, -0.5]`.
pub fn random_plant(rng: &mut impl Rng) -> PlantModel {
    loop {
        let a = random_matrix(rng, 2, 2, 2.0);
        let b = random_matrix(rng, 2, 1, 1.0);
        let ab = &a * &b;
        let ctrb = matrix(2, 2, &[b[0], ab[0], b[1], ab[1]]).unwrap();
        if ctrb.determinant().abs() < 0.2 {
            continue;
        }
        let p1 = rng.random_range(-3.0..-0.5);
        let p2 = rng.random_range(-3.0..-0.5);
        let i = Matrix::identity(2, 2);
        let poly = (&a - &i * p1) * (&a - &i * p2);
        let inv = ctrb.try_inverse().unwrap();
        let k = -(matrix(1, 2, &[0.0, 1.0]).unwrap() * inv * poly);
        return PlantModel::new(a, b, k, None, vec![1, 1], 0.0).unwrap();
    }
}

/// A period at which full sampling of `plant` is comfortably Schur.
pub fn stable_period(rng: &mut impl Rng, plant: &PlantModel) -> f64 {
    loop {
        let t = rng.random_range(0.02..0.3);
        let dp = DiscretePlant::new(plant, t).unwrap();
        if spectral_radius(&dp.full_sampling_matrix()).unwrap() < 0.98 {
            return t;
        }
    }
}
