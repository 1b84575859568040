#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Monte-Carlo standard error of the mean via non-overlapping batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Closed-form posterior mean (XᵀX + I/σ²)⁻¹Xᵀy for the design [1 | C].
pub fn conjugate_mean(c: &DMatrix<f64>, y: &[f64], prior_var: f64) -> DVector<f64> {
    let (k, n) = c.shape();
    let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { c[(j - 1, i)] });
    let a = x.transpose() * &x + DMatrix::<f64>::identity(k + 1, k + 1) / prior_var;
    a.lu().solve(&(x.transpose() * DVector::from_column_slice(y))).unwrap()
}

/// Symmetric positive-definite matrix A Aᵀ + δI with Gaussian A.
pub fn random_spd<R: Rng>(rng: &mut R, p: usize, delta: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    &a * a.transpose() + DMatrix::<f64>::identity(p, p) * delta
}

pub fn ln_inverse_gamma(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}
