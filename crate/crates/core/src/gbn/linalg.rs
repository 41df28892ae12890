//! Weighted regression, conditional variances, the χ² critical value and the
//! multivariate normal density used by the mixture.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Residual variances never drop below this.
pub const SIGMA2_FLOOR: f64 = 1e-12;
/// Diagonal load added when a normal system is not positive definite.
pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Weighted mean squared residual.
    pub sigma2: f64,
}

impl Regression {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Weighted means and (population) covariance of a set of regressor columns
/// followed by the response. Any regression of the response on a subset of
/// the columns can be read off these moments.
#[derive(Debug, Clone)]
pub struct Moments {
    pub total_weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Moments {
    /// Moments of all columns of `x` and the response `y` under row weights `w`.
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> Result<Self> {
        let cols: Vec<usize> = (0..x.ncols()).collect();
        Self::of_columns(x, &cols, y, w)
    }

    /// As [`Moments::new`] restricted to `cols` of `x`, in that order.
    pub fn of_columns(x: &DMatrix<f64>, cols: &[usize], y: &DVector<f64>, w: &[f64]) -> Result<Self> {
        assert_eq!(x.nrows(), y.len());
        assert_eq!(x.nrows(), w.len());
        let total_weight: f64 = w.iter().sum();
        if total_weight.is_nan() || total_weight <= 0.0 {
            return Err(Error::InvalidParameter("regression weights sum to zero".into()));
        }
        let p = cols.len();
        let mut mean = DVector::zeros(p + 1);
        for (t, &wt) in w.iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            for (j, &c) in cols.iter().enumerate() {
                mean[j] += wt * x[(t, c)];
            }
            mean[p] += wt * y[t];
        }
        mean /= total_weight;

        let rows: Vec<usize> = (0..w.len()).filter(|&t| w[t] != 0.0).collect();
        let mut z = DMatrix::zeros(rows.len(), p + 1);
        for (i, &t) in rows.iter().enumerate() {
            let s = (w[t] / total_weight).sqrt();
            for (j, &c) in cols.iter().enumerate() {
                z[(i, j)] = s * (x[(t, c)] - mean[j]);
            }
            z[(i, p)] = s * (y[t] - mean[p]);
        }
        Ok(Self {
            total_weight,
            mean,
            cov: z.tr_mul(&z),
        })
    }

    fn response(&self) -> usize {
        self.mean.len() - 1
    }

    /// Regression of the response on the given column positions.
    pub fn fit(&self, cols: &[usize]) -> Result<Regression> {
        let r = self.response();
        let sub = self.cov.select_rows(cols).select_columns(cols);
        let rhs = DVector::from_iterator(cols.len(), cols.iter().map(|&c| self.cov[(c, r)]));
        let coef = if cols.is_empty() {
            DVector::zeros(0)
        } else {
            solve_spd(sub.clone(), &rhs)?
        };
        // residual variance for these coefficients; equals the Schur
        // complement when the solve was unregularized
        let var = self.cov[(r, r)] - 2.0 * coef.dot(&rhs) + (&sub * &coef).dot(&coef);
        let intercept = self.mean[r] - cols.iter().zip(coef.iter()).map(|(&c, a)| self.mean[c] * a).sum::<f64>();
        Ok(Regression {
            coef: coef.iter().copied().collect(),
            intercept,
            sigma2: var.max(SIGMA2_FLOOR),
        })
    }

    /// Residual variance of the response given the column subset.
    pub fn conditional_variance(&self, cols: &[usize]) -> Result<f64> {
        Ok(self.fit(cols)?.sigma2)
    }
}

/// Solves a symmetric positive definite system, loading the diagonal with
/// [`RIDGE`] only if the plain factorization fails.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let n = a.nrows();
    let loaded = a + DMatrix::identity(n, n) * RIDGE;
    loaded.cholesky().map(|ch| ch.solve(b)).ok_or(Error::SingularSystem)
}

/// Weighted least squares with an intercept.
pub fn fit_wls(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> Result<Regression> {
    let m = Moments::new(x, y, w)?;
    m.fit(&(0..x.ncols()).collect::<Vec<_>>())
}

/// Residual variance of `y` regressed on the columns `cols` of `x`, unit weights.
pub fn conditional_variance(x: &DMatrix<f64>, y: &DVector<f64>, cols: &[usize]) -> Result<f64> {
    if y.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: y.len() });
    }
    Moments::of_columns(x, cols, y, &vec![1.0; y.len()])?.conditional_variance(&(0..cols.len()).collect::<Vec<_>>())
}

/// Upper-`alpha` critical value of the χ² distribution with `df` degrees of
/// freedom.
pub fn chi2_quantile(df: usize, alpha: f64) -> f64 {
    assert!(df >= 1, "χ² needs at least one degree of freedom");
    if alpha >= 1.0 {
        return 0.0;
    }
    if alpha <= 0.0 {
        return f64::INFINITY;
    }
    let k = df as f64;
    let upper = |x: f64| gamma_ur(k / 2.0, x / 2.0);
    // Wilson–Hilferty starting point
    let z = statrs::distribution::ContinuousCDF::inverse_cdf(&statrs::distribution::Normal::standard(), 1.0 - alpha);
    let h = 2.0 / (9.0 * k);
    let guess = (k * (1.0 - h + z * h.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (guess, guess);
    while upper(lo) < alpha {
        lo /= 2.0;
    }
    while upper(hi) > alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if upper(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Multivariate normal with a cached factorization. Zero-dimensional
/// instances have density 1.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    log_norm: f64,
}

impl Gaussian {
    /// Fails with [`Error::SingularSystem`] if `cov` is not positive definite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Ok(Self {
                mean,
                chol: None,
                log_norm: 0.0,
            });
        }
        let chol = cov.cholesky().ok_or(Error::SingularSystem)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            chol: Some(chol),
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let Some(chol) = &self.chol else { return 0.0 };
        let diff = DVector::from_column_slice(x) - &self.mean;
        let mut sol = diff.clone();
        chol.l_dirty().solve_lower_triangular_mut(&mut sol);
        self.log_norm - 0.5 * sol.norm_squared()
    }
}

/// Log density of N(mean, var) at x.
pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = x.column(0).map(|v| 2.0 * v + 1.0);
        let r = fit_wls(&x, &y, &[1.0; 5]).unwrap();
        assert!((r.coef[0] - 2.0).abs() < 1e-12);
        assert!((r.intercept - 1.0).abs() < 1e-12);
        assert_eq!(r.sigma2, SIGMA2_FLOOR);
    }

    #[test]
    fn zero_weights_drop_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(40, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(40, |i, _| x[(i, 0)] - 0.5 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
        let w: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let a = fit_wls(&x, &y, &w).unwrap();
        let keep: Vec<usize> = (0..40).step_by(2).collect();
        let b = fit_wls(&x.select_rows(&keep), &y.select_rows(&keep), &[1.0; 20]).unwrap();
        for (p, q) in a.coef.iter().zip(&b.coef) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!((a.intercept - b.intercept).abs() < 1e-12);
        assert!((a.sigma2 - b.sigma2).abs() < 1e-12);
    }

    /// Oracle: pseudoinverse of the intercept-augmented design.
    #[test]
    fn matches_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(200, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(200, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0 + 1.0);
        let r = fit_wls(&x, &y, &[1.0; 200]).unwrap();
        let aug = DMatrix::from_fn(200, 6, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let beta = aug.clone().pseudo_inverse(1e-14).unwrap() * &y;
        assert!((r.intercept - beta[0]).abs() <= 1e-6 * beta[0].abs().max(1.0));
        for j in 0..5 {
            assert!((r.coef[j] - beta[j + 1]).abs() <= 1e-6 * beta[j + 1].abs().max(1e-3));
        }
        let resid = &y - &aug * &beta;
        assert!((r.sigma2 - resid.norm_squared() / 200.0).abs() < 1e-10);
    }

    #[test]
    fn conditional_variance_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5000;
        let rho: f64 = 0.6;
        let mut x = DMatrix::zeros(n, 1);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            x[(i, 0)] = a;
            y[i] = 2.0 * (rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        let marginal = conditional_variance(&x, &y, &[]).unwrap();
        let cond = conditional_variance(&x, &y, &[0]).unwrap();
        assert!((cond / marginal - (1.0 - rho * rho)).abs() < 0.05 * (1.0 - rho * rho));
        let exact = x.column(0).map(|v| 3.0 * v);
        assert_eq!(conditional_variance(&x, &exact, &[0]).unwrap(), SIGMA2_FLOOR);
    }

    #[test]
    fn collinear_columns_fall_back_to_ridge() {
        let x = DMatrix::from_fn(10, 2, |i, _| i as f64);
        let y = DVector::from_fn(10, |i, _| i as f64);
        let r = fit_wls(&x, &y, &[1.0; 10]).unwrap();
        assert!((r.coef[0] + r.coef[1] - 1.0).abs() < 1e-4);
    }

    /// Oracle: Simpson integration of the χ² density over [0, q] gives 0.95.
    #[test]
    fn chi2_critical_values() {
        assert!((chi2_quantile(1, 0.05) - 3.8415).abs() < 1e-3);
        assert!((chi2_quantile(3, 0.05) - 7.8147).abs() < 1e-3);
        assert_eq!(chi2_quantile(2, 1.0), 0.0);
        // df = 2 has a closed form
        assert!((chi2_quantile(2, 0.05) - (-2.0 * 0.05f64.ln())).abs() < 1e-9);
        for df in [3usize, 4, 6] {
            let q = chi2_quantile(df, 0.05);
            let k = df as f64;
            let norm = 2f64.powf(k / 2.0) * statrs::function::gamma::gamma(k / 2.0);
            let pdf = |x: f64| x.powf(k / 2.0 - 1.0) * (-x / 2.0).exp() / norm;
            let n = 20_000;
            let h = q / n as f64;
            let mut s = pdf(0.0) + pdf(q);
            for i in 1..n {
                s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((s * h / 3.0 - 0.95).abs() < 1e-6, "df {df}");
        }
    }

    #[test]
    fn gaussian_density_matches_closed_form() {
        let g = Gaussian::new(DVector::from_vec(vec![1.0, -1.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let x = [0.3, 0.2];
        let det: f64 = 2.0 - 0.25;
        let inv = [1.0 / det, -0.5 / det, -0.5 / det, 2.0 / det];
        let d = [x[0] - 1.0, x[1] + 1.0];
        let q = d[0] * (inv[0] * d[0] + inv[1] * d[1]) + d[1] * (inv[2] * d[0] + inv[3] * d[1]);
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q;
        assert!((g.ln_pdf(&x) - expected).abs() < 1e-12);
        let empty = Gaussian::new(DVector::zeros(0), DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(empty.ln_pdf(&[]), 0.0);
    }
}
