//! Principal components by power iteration with deflation on the sample
//! covariance.

use super::{dot, norm, Mat};
use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 1000;

#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Orthonormal principal directions, largest variance first.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// One `k`-vector per input point.
    pub projections: Vec<Vec<f64>>,
}

pub fn pca_project(points: &[Vec<f64>], k: usize) -> Result<Pca> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    for p in points {
        crate::error::check_dims(dim, p.len())?;
    }
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!(
            "PCA needs 1 <= k <= {dim}, got k = {k}"
        )));
    }

    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        super::add_scaled(&mut mean, 1.0, p);
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = Mat::zeros(dim, dim);
    for p in points {
        let c: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for _ in 0..k {
        let (v, lambda) = leading_eigenpair(&cov, &components);
        // deflate
        for i in 0..dim {
            for j in 0..dim {
                cov[(i, j)] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
        variances.push(lambda.max(0.0));
    }

    let projections = points
        .iter()
        .map(|p| {
            let c: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
            components.iter().map(|v| dot(v, &c)).collect()
        })
        .collect();

    Ok(Pca {
        mean,
        components,
        explained_variance: variances,
        projections,
    })
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        super::add_scaled(v, -p, b);
    }
}

/// Any unit vector orthogonal to `basis`, found by Gram–Schmidt on the
/// standard basis.
fn orthogonal_unit(dim: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best = vec![0.0; dim];
    let mut best_norm = -1.0;
    for j in 0..dim {
        let mut e = super::one_hot(j, dim);
        orthogonalize(&mut e, basis);
        orthogonalize(&mut e, basis);
        let n = norm(&e);
        if n > best_norm {
            best_norm = n;
            best = e;
        }
    }
    best.iter_mut().for_each(|x| *x /= best_norm);
    best
}

fn leading_eigenpair(cov: &Mat, found: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let dim = cov.rows();
    // Start from the covariance column with the largest norm: it lies in the
    // range of the (deflated) matrix, so it overlaps the top eigenvector
    // unless the remaining spectrum is zero.
    let mut v = (0..dim)
        .map(|j| (0..dim).map(|i| cov[(i, j)]).collect::<Vec<_>>())
        .max_by(|a, b| norm(a).total_cmp(&norm(b)))
        .unwrap_or_default();
    orthogonalize(&mut v, found);
    let scale = cov.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut nv = norm(&v);
    if nv <= 1e-14 * scale.max(1e-300) || nv == 0.0 {
        let v = canonical_sign(orthogonal_unit(dim, found));
        let lambda = dot(&v, &cov.matvec(&v).expect("square"));
        return (v, lambda);
    }
    v.iter_mut().for_each(|x| *x /= nv);

    for _ in 0..MAX_ITERATIONS {
        let mut w = cov.matvec(&v).expect("square");
        orthogonalize(&mut w, found);
        nv = norm(&w);
        if nv == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= nv);
        let delta = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        v = w;
        if delta < TOLERANCE {
            break;
        }
    }
    let v = canonical_sign(v);
    let lambda = dot(&v, &cov.matvec(&v).expect("square"));
    (v, lambda)
}

/// Flip so the largest-magnitude coordinate is positive.
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}
