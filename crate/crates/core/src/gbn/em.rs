//! EM for a mixture of linear-Gaussian regressions whose latent cluster also
//! governs a Gaussian over the environment vector.
//!
//! The prior is per row: `π[t][k]`. The log-likelihood tracked across
//! iterations is `Σ_t ln Σ_k π[t][k] · N(y_t | x_t·A_k + μ_k, σ²_k) · N(e_t | B_k)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::Design;
use super::kmeans::kmeans_init;
use super::linalg::{ln_normal, Gaussian, Moments, Regression};
use crate::error::{Error, Result};

/// How the per-row prior is updated from the responsibilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorUpdate {
    /// `γ[t][k] / T_k`, renormalized per row. A row whose update would lower
    /// the expected complete-data log-likelihood keeps its previous prior.
    #[default]
    Normalized,
    /// `γ[t][k] / T_k` as is; rows no longer sum to one.
    AsPrinted,
}

/// Row weights used to refit each cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    #[default]
    Soft,
    /// Each row counts fully towards its most responsible cluster only.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub clusters: usize,
    pub max_iter: usize,
    /// Stop once the log-likelihood changes by less than `tol · |LL|`.
    pub tol: f64,
    pub prior: PriorUpdate,
    pub assignment: Assignment,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            clusters: 3,
            max_iter: 10,
            tol: 1e-6,
            prior: PriorUpdate::Normalized,
            assignment: Assignment::Soft,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterFit {
    /// Design columns of this cluster's parents.
    pub columns: Vec<usize>,
    pub regression: Regression,
    pub env_mean: DVector<f64>,
    pub env_cov: DMatrix<f64>,
    env: Gaussian,
}

impl ClusterFit {
    pub fn new(columns: Vec<usize>, regression: Regression, env_mean: DVector<f64>, env_cov: DMatrix<f64>) -> Result<Self> {
        let env = Gaussian::new(env_mean.clone(), env_cov.clone())?;
        Ok(Self {
            columns,
            regression,
            env_mean,
            env_cov,
            env,
        })
    }

    pub fn env_ln_pdf(&self, e: &[f64]) -> f64 {
        self.env.ln_pdf(e)
    }

    fn predictions(&self, design: &Design) -> DVector<f64> {
        let coef = DVector::from_column_slice(&self.regression.coef);
        let x = design.x.select_columns(&self.columns);
        (x * coef).add_scalar(self.regression.intercept)
    }
}

#[derive(Debug, Clone)]
pub struct EmState {
    pub clusters: Vec<ClusterFit>,
    /// Per-row prior, rows × clusters.
    pub pi: DMatrix<f64>,
    /// Responsibilities from the last E-step, rows × clusters.
    pub gamma: DMatrix<f64>,
    /// Most likely cluster per row under the prior.
    pub tags: Vec<usize>,
    pub ll_trace: Vec<f64>,
}

impl EmState {
    /// Share of rows tagged with each cluster.
    pub fn cluster_weights(&self) -> Vec<f64> {
        let k = self.clusters.len();
        let mut w = vec![0.0; k];
        for &t in &self.tags {
            w[t] += 1.0;
        }
        let n = self.tags.len().max(1) as f64;
        w.iter().map(|v| v / n).collect()
    }

    pub fn log_likelihood(&self) -> f64 {
        self.ll_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

pub struct EStep {
    pub gamma: DMatrix<f64>,
    pub log_likelihood: f64,
    pub row_log_likelihood: Vec<f64>,
}

/// Responsibilities, computed in log space with per-row max subtraction.
pub fn e_step(design: &Design, clusters: &[ClusterFit], pi: &DMatrix<f64>) -> EStep {
    let n = design.rows();
    let k = clusters.len();
    let preds: Vec<DVector<f64>> = clusters.iter().map(|c| c.predictions(design)).collect();
    let mut gamma = DMatrix::zeros(n, k);
    let mut row_ll = vec![0.0; n];
    let mut logs = vec![0.0; k];
    for t in 0..n {
        let e = design.env_row(t);
        for (j, c) in clusters.iter().enumerate() {
            logs[j] = pi[(t, j)].ln() + ln_normal(design.y[t], preds[j][t], c.regression.sigma2) + c.env_ln_pdf(e);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            log::warn!("row {t}: every cluster has zero density; using a uniform row");
            for j in 0..k {
                gamma[(t, j)] = 1.0 / k as f64;
            }
            row_ll[t] = f64::NEG_INFINITY;
            continue;
        }
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        for j in 0..k {
            gamma[(t, j)] = (logs[j] - max).exp() / sum;
        }
        row_ll[t] = max + sum.ln();
    }
    EStep {
        gamma,
        log_likelihood: row_ll.iter().sum(),
        row_log_likelihood: row_ll,
    }
}

fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn fit_env(design: &Design, w: &[f64], total: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = design.env_dim();
    let mut mean = DVector::zeros(d);
    for (t, &wt) in w.iter().enumerate() {
        for (j, v) in design.env_row(t).iter().enumerate() {
            mean[j] += wt * v;
        }
    }
    mean /= total;
    let mut cov = DMatrix::zeros(d, d);
    for (t, &wt) in w.iter().enumerate() {
        if wt == 0.0 {
            continue;
        }
        let diff = DVector::from_column_slice(design.env_row(t)) - &mean;
        cov += &diff * diff.transpose() * wt;
    }
    cov /= total;
    Ok((mean, cov))
}

/// Fits one cluster; the environment covariance gets a trace-scaled
/// diagonal load only when it is not positive definite.
fn fit_cluster(design: &Design, columns: &[usize], w: &[f64], total: f64) -> Result<ClusterFit> {
    let regression = Moments::of_columns(&design.x, columns, &design.y, w)?.fit(&(0..columns.len()).collect::<Vec<_>>())?;
    let (mean, cov) = fit_env(design, w, total)?;
    match ClusterFit::new(columns.to_vec(), regression.clone(), mean.clone(), cov.clone()) {
        Err(Error::SingularSystem) => {
            let d = cov.nrows();
            let scale = if cov.trace() > 0.0 { cov.trace() / d as f64 } else { 1.0 };
            let loaded = cov + DMatrix::identity(d, d) * (1e-6 * scale);
            ClusterFit::new(columns.to_vec(), regression, mean, loaded)
        }
        other => other,
    }
}

/// Refits every cluster from responsibilities and updates the prior.
/// `prev_pi` enables the monotonicity guard of [`PriorUpdate::Normalized`].
pub fn m_step(
    design: &Design,
    gamma: &DMatrix<f64>,
    columns: &[Vec<usize>],
    prev_pi: Option<&DMatrix<f64>>,
    config: &EmConfig,
) -> Result<(Vec<ClusterFit>, DMatrix<f64>, Vec<usize>)> {
    let (n, k) = gamma.shape();
    let weights: Vec<Vec<f64>> = match config.assignment {
        Assignment::Soft => (0..k).map(|j| gamma.column(j).iter().copied().collect()).collect(),
        Assignment::Hard => {
            let tags: Vec<usize> = (0..n).map(|t| argmax(gamma.row(t).iter().copied())).collect();
            (0..k).map(|j| tags.iter().map(|&l| if l == j { 1.0 } else { 0.0 }).collect()).collect()
        }
    };
    let mut clusters = Vec::with_capacity(k);
    let mut mass = vec![0.0; k];
    for j in 0..k {
        mass[j] = weights[j].iter().sum();
        let min_mass = (columns[j].len() + 2) as f64;
        if mass[j].is_nan() || mass[j] < min_mass {
            return Err(Error::DegenerateCluster(j));
        }
        clusters.push(fit_cluster(design, &columns[j], &weights[j], mass[j])?);
    }

    let soft_mass: Vec<f64> = (0..k).map(|j| gamma.column(j).sum()).collect();
    let mut pi = DMatrix::from_fn(n, k, |t, j| gamma[(t, j)] / soft_mass[j]);
    if config.prior == PriorUpdate::Normalized {
        for t in 0..n {
            let s: f64 = pi.row(t).sum();
            for j in 0..k {
                pi[(t, j)] /= s;
            }
            if let Some(prev) = prev_pi {
                let q = |p: &DMatrix<f64>| -> f64 { (0..k).filter(|&j| gamma[(t, j)] > 0.0).map(|j| gamma[(t, j)] * p[(t, j)].ln()).sum() };
                if q(&pi) < q(prev) {
                    for j in 0..k {
                        pi[(t, j)] = prev[(t, j)];
                    }
                }
            }
        }
    }
    let tags = (0..n).map(|t| argmax(pi.row(t).iter().copied())).collect();
    Ok((clusters, pi, tags))
}

/// Smoothed one-hot responsibilities from k-means on the environment, or on
/// the response when there is no environment.
pub fn initial_gamma(design: &Design, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    let data = if design.env_dim() > 0 {
        design.env_matrix()
    } else {
        DMatrix::from_column_slice(design.rows(), 1, design.y.as_slice())
    };
    let labels = kmeans_init(&data, k, seed)?;
    let off = 0.1 / k as f64;
    Ok(DMatrix::from_fn(design.rows(), k, |t, j| if labels[t] == j { 0.9 + off } else { off }))
}

/// Gives the `⌈rows / k⌉` worst-explained rows entirely to `cluster`.
fn reseed(gamma: &mut DMatrix<f64>, cluster: usize, row_scores: &[f64]) {
    let (n, k) = gamma.shape();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| row_scores[a].total_cmp(&row_scores[b]));
    for &t in order.iter().take(n.div_ceil(k)) {
        for j in 0..k {
            gamma[(t, j)] = if j == cluster { 1.0 } else { 0.0 };
        }
    }
}

/// Alternates M and E steps from `init` (or a k-means start). Each cluster
/// regresses on its own column set.
pub fn em_learn(design: &Design, columns: &[Vec<usize>], config: &EmConfig, init: Option<DMatrix<f64>>) -> Result<EmState> {
    let k = config.clusters;
    if k == 0 || columns.len() != k {
        return Err(Error::InvalidParameter(format!("{} column sets for {k} clusters", columns.len())));
    }
    let widest = columns.iter().map(Vec::len).max().unwrap_or(0);
    let needed = (k * (widest + 2)).max(2 * k);
    if design.rows() < needed {
        return Err(Error::TooFewSamples { needed, got: design.rows() });
    }
    let mut gamma = match init {
        Some(g) => g,
        None => initial_gamma(design, k, config.seed)?,
    };
    let mean_y = design.y.mean();
    let mut row_scores: Vec<f64> = design.y.iter().map(|y| -(y - mean_y).abs()).collect();
    let mut prev_pi: Option<DMatrix<f64>> = None;
    let mut ll_trace: Vec<f64> = Vec::new();
    let mut reseeded = false;
    loop {
        let (clusters, pi, tags) = match m_step(design, &gamma, columns, prev_pi.as_ref(), config) {
            Err(Error::DegenerateCluster(j)) if !reseeded => {
                log::warn!("cluster {j} lost its rows; re-seeding from the worst-explained rows");
                reseeded = true;
                reseed(&mut gamma, j, &row_scores);
                m_step(design, &gamma, columns, None, config)?
            }
            other => other?,
        };
        let e = e_step(design, &clusters, &pi);
        if config.prior == PriorUpdate::AsPrinted && !e.log_likelihood.is_finite() {
            log::warn!("log-likelihood is not finite under the unnormalized prior");
        }
        let converged = ll_trace
            .last()
            .is_some_and(|prev| (e.log_likelihood - prev).abs() < config.tol * e.log_likelihood.abs());
        ll_trace.push(e.log_likelihood);
        row_scores = e.row_log_likelihood;
        if converged || ll_trace.len() >= config.max_iter {
            return Ok(EmState {
                clusters,
                pi,
                gamma: e.gamma,
                tags,
                ll_trace,
            });
        }
        gamma = e.gamma;
        prev_pi = Some(pi);
    }
}
