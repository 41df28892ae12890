use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOL: f64 = 1e-8;
const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// One unit-length principal direction per output dimension.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component (population normalization).
    pub explained_variance: Vec<f64>,
    /// Centered rows projected on the components.
    pub projected: Vec<Vec<f64>>,
}

/// Projects rows onto their leading principal components, found by power
/// iteration on the covariance with deflation.
pub fn pca_project(rows: &DMatrix<f64>, dims: usize) -> Result<PcaProjection> {
    let (n, d) = rows.shape();
    if n < dims || dims > d || dims == 0 {
        return Err(Error::InvalidParameter(format!("{dims} components from {n}×{d} data")));
    }
    let mean = rows.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[(i, j)] - mean[j]);
    let mut cov = centered.tr_mul(&centered) / n as f64;

    let mut components = Vec::with_capacity(dims);
    let mut explained = Vec::with_capacity(dims);
    for c in 0..dims {
        // fixed, generic start so results are reproducible
        let mut v = DVector::from_fn(d, |i, _| 1.0 + 0.1 * ((i + c) % 7) as f64);
        v.normalize_mut();
        let mut lambda = 0.0;
        for _ in 0..MAX_ITER {
            let w = &cov * &v;
            let norm = w.norm();
            if norm < 1e-300 {
                break;
            }
            let next = w / norm;
            // sign-insensitive convergence check
            let delta = (&next - &v).norm().min((&next + &v).norm());
            v = next;
            lambda = v.dot(&(&cov * &v));
            if delta < TOL {
                break;
            }
        }
        cov -= &v * v.transpose() * lambda;
        explained.push(lambda.max(0.0));
        components.push(v);
    }
    let projected = (0..n)
        .map(|i| components.iter().map(|v| centered.row(i).transpose().dot(v)).collect())
        .collect();
    Ok(PcaProjection {
        components: components.iter().map(|v| v.iter().copied().collect()).collect(),
        explained_variance: explained,
        projected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn two_d_projection_is_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = DMatrix::from_fn(30, 2, |_, j| rng.sample::<f64, _>(StandardNormal) * (j + 1) as f64);
        let p = pca_project(&raw, 2).unwrap();
        let mean = raw.row_mean();
        for i in 0..30 {
            for j in 0..30 {
                let a = ((raw[(i, 0)] - raw[(j, 0)]).powi(2) + (raw[(i, 1)] - raw[(j, 1)]).powi(2)).sqrt();
                let b = ((p.projected[i][0] - p.projected[j][0]).powi(2) + (p.projected[i][1] - p.projected[j][1]).powi(2)).sqrt();
                assert!((a - b).abs() < 1e-6);
            }
            let r = ((raw[(i, 0)] - mean[0]).powi(2) + (raw[(i, 1)] - mean[1]).powi(2)).sqrt();
            assert!((r - (p.projected[i][0].powi(2) + p.projected[i][1].powi(2)).sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn rank_one() {
        let raw = DMatrix::from_fn(20, 3, |i, j| i as f64 * [1.0, 2.0, -1.0][j]);
        let p = pca_project(&raw, 2).unwrap();
        assert!(p.explained_variance[0] > 1.0);
        assert!(p.explained_variance[1] < 1e-9);
    }

    /// Oracle: nalgebra's symmetric eigensolver.
    #[test]
    fn matches_eigen_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scales = [5.0, 3.0, 2.0, 1.0, 0.5];
        let raw = DMatrix::from_fn(100, 5, |_, j| rng.sample::<f64, _>(StandardNormal) * scales[j]);
        let p = pca_project(&raw, 3).unwrap();
        let mean = raw.row_mean();
        let c = DMatrix::from_fn(100, 5, |i, j| raw[(i, j)] - mean[j]);
        let eig = (c.tr_mul(&c) / 100.0).symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        for (k, v) in vals.iter().take(3).enumerate() {
            assert!((p.explained_variance[k] - v).abs() < 1e-6 * v, "{k}");
        }
    }
}
