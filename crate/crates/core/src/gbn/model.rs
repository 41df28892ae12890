//! Persisted causal model and one-hour-ahead prediction.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{Panel, ParentSpec};
use super::em::EmState;
use super::linalg::Gaussian;
use crate::data::{Minutes, SeriesKey, MINUTES_PER_HOUR};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

/// Relative errors are taken against at least this many concentration units.
pub const ACCURACY_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbnCluster {
    pub parents: ParentSpec,
    /// One coefficient per parent slot, in `parents.slots()` order.
    pub a: Vec<f64>,
    pub mu0: f64,
    pub sigma2: f64,
    pub b_mean: Vec<f64>,
    /// Row-major environment covariance.
    pub b_cov: Vec<Vec<f64>>,
}

impl GbnCluster {
    fn env_density(&self) -> Result<Gaussian> {
        let d = self.b_mean.len();
        let cov = DMatrix::from_fn(d, d, |i, j| self.b_cov[i][j]);
        Gaussian::new(DVector::from_column_slice(&self.b_mean), cov)
    }

    fn regress(&self, q: &[f64]) -> f64 {
        self.mu0 + q.iter().zip(&self.a).map(|(x, a)| x * a).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalModel {
    pub version: u32,
    pub target: SeriesKey,
    pub k: usize,
    /// Neighbor budget the structure was learned with.
    pub n: usize,
    pub lags: usize,
    pub clusters: Vec<GbnCluster>,
    pub cluster_weights: Vec<f64>,
    pub ll_trace: Vec<f64>,
    /// Mapping from model space back to one-hour changes.
    pub diff_mean: f64,
    pub diff_std: f64,
}

impl CausalModel {
    pub fn from_state(panel: &Panel, target: &SeriesKey, parents: &[ParentSpec], state: &EmState, n: usize) -> Result<Self> {
        let (diff_mean, diff_std) = panel.scale(target).ok_or_else(|| Error::UnknownSensor(target.to_string()))?;
        let clusters = parents
            .iter()
            .zip(&state.clusters)
            .map(|(p, c)| GbnCluster {
                parents: p.clone(),
                a: c.regression.coef.clone(),
                mu0: c.regression.intercept,
                sigma2: c.regression.sigma2,
                b_mean: c.env_mean.iter().copied().collect(),
                b_cov: (0..c.env_cov.nrows()).map(|i| c.env_cov.row(i).iter().copied().collect()).collect(),
            })
            .collect();
        Ok(Self {
            version: MODEL_VERSION,
            target: target.clone(),
            k: parents.len(),
            n,
            lags: parents.first().map_or(0, |p| p.lags),
            clusters,
            cluster_weights: state.cluster_weights(),
            ll_trace: state.ll_trace.clone(),
            diff_mean,
            diff_std,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.version != MODEL_VERSION {
            return Err(Error::InvalidParameter(format!("model version {} is not supported", model.version)));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Every neighbor series used by any cluster.
    pub fn neighbor_series(&self) -> Vec<SeriesKey> {
        let mut out: Vec<SeriesKey> = self.clusters.iter().flat_map(|c| c.parents.neighbors.iter().cloned()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn predictor(&self) -> Result<Predictor<'_>> {
        let env = self.clusters.iter().map(GbnCluster::env_density).collect::<Result<_>>()?;
        Ok(Predictor { model: self, env })
    }
}

/// A model with its environment densities factored, ready for repeated use.
pub struct Predictor<'a> {
    model: &'a CausalModel,
    env: Vec<Gaussian>,
}

impl Predictor<'_> {
    /// Cluster probabilities given the environment: the cluster weight times
    /// the environment density, normalized. Falls back to the cluster
    /// weights when the environment carries no information.
    pub fn cluster_probabilities(&self, env: Option<&[f64]>) -> Vec<f64> {
        let w = &self.model.cluster_weights;
        let Some(e) = env.filter(|e| !e.is_empty()) else {
            return w.clone();
        };
        let logs: Vec<f64> = w.iter().zip(&self.env).map(|(w, g)| w.ln() + g.ln_pdf(e)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return w.clone();
        }
        let p: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter().map(|v| v / s).collect()
    }

    /// Expected model-space value of the target at `t`.
    pub fn predict_1h(&self, panel: &Panel, t: Minutes) -> Result<f64> {
        let pr = self.cluster_probabilities(panel.env(t));
        let mut z = 0.0;
        for (c, p) in self.model.clusters.iter().zip(pr) {
            if p == 0.0 {
                continue;
            }
            z += p * c.regress(&c.parents.values_at(panel, t)?);
        }
        Ok(z)
    }

    /// Concentration estimate at `t`: the previous hour's level plus the
    /// predicted change.
    pub fn predict_level(&self, panel: &Panel, t: Minutes) -> Result<f64> {
        let target = &self.model.target;
        let prev = panel
            .level(target, t - MINUTES_PER_HOUR)
            .ok_or_else(|| Error::MissingLags(format!("{target} level before {}", crate::data::format_timestamp(t))))?;
        Ok(prev + self.model.diff_mean + self.predict_1h(panel, t)? * self.model.diff_std)
    }
}

/// `1 − mean(|est − truth| / max(truth, 1))`.
pub fn accuracy_eval(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    let err: f64 = estimates.iter().zip(truths).map(|(e, t)| (e - t).abs() / t.max(ACCURACY_FLOOR)).sum();
    Ok(1.0 - err / truths.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub target: SeriesKey,
    pub accuracy: f64,
    pub rows: usize,
    pub estimates: Vec<f64>,
    pub truths: Vec<f64>,
}

/// Predicts every timestamp with a truth and a full lag window. Measured
/// series are scored in concentration space, model-space panels directly.
pub fn evaluate(model: &CausalModel, panel: &Panel, timestamps: &[Minutes]) -> Result<Evaluation> {
    let p = model.predictor()?;
    let levels = panel.has_levels(&model.target);
    let mut estimates = Vec::new();
    let mut truths = Vec::new();
    for &t in timestamps {
        let truth = if levels {
            panel.level(&model.target, t)
        } else {
            panel.value(&model.target, t)
        };
        let Some(truth) = truth else { continue };
        let est = if levels { p.predict_level(panel, t) } else { p.predict_1h(panel, t) };
        match est {
            Ok(e) => {
                estimates.push(e);
                truths.push(truth);
            }
            Err(Error::MissingLags(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if estimates.is_empty() {
        return Err(Error::NoUsableRows(format!("{} has no evaluable test rows", model.target)));
    }
    Ok(Evaluation {
        target: model.target.clone(),
        accuracy: accuracy_eval(&estimates, &truths)?,
        rows: estimates.len(),
        estimates,
        truths,
    })
}
