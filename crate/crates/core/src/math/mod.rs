//! Dense vector and matrix arithmetic.

mod mat;
mod pca;

pub use mat::{gemm, Mat, Transpose};
pub use pca::{pca_project, Pca};

use crate::error::{check_dims, Error, Result};

/// Below this norm a vector cannot be normalized.
pub const NORM_EPSILON: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance `Σ (aᵢ − bᵢ)²`.
pub fn sq_l2_dist(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(sq_l2_dist_unchecked(a, b))
}

#[inline]
pub(crate) fn sq_l2_dist_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn l2_normalize(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if !(n > NORM_EPSILON) {
        return Err(Error::DegenerateEmbedding {
            norm: n,
            threshold: NORM_EPSILON,
        });
    }
    Ok(a.iter().map(|x| x / n).collect())
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_scaled(acc: &mut [f64], scale: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += scale * v;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}
