#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regflow::{HVector, NonlinearProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn hv(v: DVector<f64>) -> HVector {
    HVector::from_dvector(v).unwrap()
}

/// `F(x) = A (x - xhat)` with analytic Jacobian and the known root attached.
pub fn affine(a: DMatrix<f64>, xhat: DVector<f64>) -> NonlinearProblem {
    let n = a.nrows();
    let (a2, c) = (a.clone(), xhat.clone());
    NonlinearProblem::new("affine", n, move |x| &a2 * (x - &c))
        .unwrap()
        .with_jacobian(move |_| a.clone())
        .with_known_solution(hv(xhat))
        .unwrap()
}

/// `F(x)_i = x_i^2 - xhat_i^2`.
pub fn squares(xhat: DVector<f64>) -> NonlinearProblem {
    let n = xhat.len();
    let target = xhat.map(|v| v * v);
    NonlinearProblem::new("squares", n, move |x| x.map(|v| v * v) - &target)
        .unwrap()
        .with_jacobian(|x| DMatrix::from_diagonal(&(x * 2.0)))
}

/// Spectral norm from the eigenvalues of `A^T A`.
pub fn spectral_norm_oracle(a: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(a.tr_mul(a)).eigenvalues;
    eig.iter().cloned().fold(0.0_f64, f64::max).sqrt()
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
