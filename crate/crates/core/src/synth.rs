//! Synthetic causal systems with known structure, the baseline recovery
//! methods they are benchmarked against, and regime-switching datasets.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Category, MeteoSeries, Minutes, PollutantSeries, SensorMeta, SeriesKey, MINUTES_PER_DAY, MINUTES_PER_HOUR};
use crate::error::{Error, Result};
use crate::gbn::{chi2_quantile, Moments, Panel};
use crate::pipeline::{find_candidates, mine_patterns, train_target, PipelineConfig};

/// 2014-01-01T00:00:00, the start of every generated series.
pub const SYNTHETIC_START: Minutes = 16_071 * MINUTES_PER_DAY;

const BURN_IN: usize = 200;
const MAX_RESCALES: usize = 10;
const TARGET_RADIUS: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_series: usize,
    pub max_lag: usize,
    /// Probability of an edge between two non-confounder nodes, in topological order.
    pub edge_density: f64,
    /// Node driving every other node.
    pub confounder: usize,
    pub noise_std: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_series: 20,
            max_lag: 3,
            edge_density: 0.05,
            confounder: 4,
            noise_std: 1.0,
            samples: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEdge {
    pub from: usize,
    pub to: usize,
    pub lag: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthGraph {
    pub n: usize,
    pub edges: Vec<TruthEdge>,
}

impl TruthGraph {
    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.from, e.to)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSystem {
    pub truth: TruthGraph,
    /// `series[node][t]`.
    pub series: Vec<Vec<f64>>,
    /// `(lat, lon)` per node.
    pub locations: Vec<(f64, f64)>,
}

/// Largest eigenvalue modulus of the lag-companion matrix.
fn spectral_radius(n: usize, max_lag: usize, edges: &[TruthEdge]) -> f64 {
    let dim = n * max_lag;
    let mut m = DMatrix::zeros(dim, dim);
    for e in edges {
        m[(e.to, (e.lag - 1) * n + e.from)] += e.coef;
    }
    for i in n..dim {
        m[(i, i - n)] = 1.0;
    }
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Linear lagged system over a random DAG whose first node in topological
/// order is the confounder, with an edge from it to every other node.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSystem> {
    generate(spec, true)
}

/// The same draw as [`gen_synthetic`] with the confounder's out-edges
/// deleted, so it no longer influences anything.
pub fn gen_unconfounded(spec: &SyntheticSpec) -> Result<SyntheticSystem> {
    generate(spec, false)
}

fn generate(spec: &SyntheticSpec, confounded: bool) -> Result<SyntheticSystem> {
    let n = spec.n_series;
    if n == 0 || spec.confounder >= n || spec.max_lag == 0 || !(0.0..=1.0).contains(&spec.edge_density) || spec.noise_std <= 0.0 {
        return Err(Error::InvalidParameter(format!("synthetic spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).filter(|&i| i != spec.confounder).collect();
    order.shuffle(&mut rng);
    order.insert(0, spec.confounder);

    let draw_edge = |rng: &mut ChaCha8Rng, from: usize, to: usize| TruthEdge {
        from,
        to,
        lag: rng.random_range(1..=spec.max_lag),
        coef: rng.random_range(0.3..=0.9) * if rng.random::<bool>() { 1.0 } else { -1.0 },
    };
    let mut edges = Vec::new();
    for (a, &from) in order.iter().enumerate() {
        for &to in &order[a + 1..] {
            if from == spec.confounder || rng.random::<f64>() < spec.edge_density {
                edges.push(draw_edge(&mut rng, from, to));
            }
        }
    }
    if !confounded {
        edges.retain(|e| e.from != spec.confounder);
    }
    edges.sort_by_key(|e| (e.to, e.from));

    let mut rescales = 0;
    loop {
        let rho = spectral_radius(n, spec.max_lag, &edges);
        if rho < TARGET_RADIUS {
            break;
        }
        if rescales == MAX_RESCALES {
            return Err(Error::UnstableSystem(rho));
        }
        let f = 0.99 * TARGET_RADIUS / rho;
        edges.iter_mut().for_each(|e| e.coef *= f);
        rescales += 1;
    }

    let noise = Normal::new(0.0, spec.noise_std).expect("positive noise");
    let total = spec.samples + BURN_IN;
    let mut x = vec![vec![0.0; total]; n];
    for t in 0..total {
        for j in &order {
            let mut v = noise.sample(&mut rng);
            for e in edges.iter().filter(|e| e.to == *j) {
                if t >= e.lag {
                    v += e.coef * x[e.from][t - e.lag];
                }
            }
            x[*j][t] = v;
        }
    }
    let series = x.into_iter().map(|s| s[BURN_IN..].to_vec()).collect();
    let locations = (0..n).map(|_| (rng.random_range(30.0..31.0), rng.random_range(120.0..121.0))).collect();
    Ok(SyntheticSystem {
        truth: TruthGraph { n, edges },
        series,
        locations,
    })
}

pub type EdgeSet = BTreeSet<(usize, usize)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Directed edge precision, recall and F1; empty denominators count as 0.
pub fn edge_metrics(recovered: &EdgeSet, truth: &EdgeSet) -> EdgeMetrics {
    let tp = recovered.intersection(truth).count() as f64;
    let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
    let precision = ratio(tp, recovered.len());
    let recall = ratio(tp, truth.len());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EdgeMetrics { precision, recall, f1 }
}

/// Lag matrix with columns `node * max_lag + (lag - 1)` for rows `max_lag..T`.
fn lag_matrix(series: &[Vec<f64>], max_lag: usize) -> Result<DMatrix<f64>> {
    let t = series.first().map_or(0, Vec::len);
    if series.iter().any(|s| s.len() != t) || t <= max_lag + 1 {
        return Err(Error::TooFewSamples { needed: max_lag + 2, got: t });
    }
    let rows = t - max_lag;
    Ok(DMatrix::from_fn(rows, series.len() * max_lag, |r, c| {
        let (node, lag) = (c / max_lag, c % max_lag + 1);
        series[node][r + max_lag - lag]
    }))
}

fn response(series: &[f64], max_lag: usize) -> DVector<f64> {
    DVector::from_column_slice(&series[max_lag..])
}

/// Edge `i → j` when adding `i`'s lags to `j`'s own-lag regression passes
/// the χ² test `n·ln(RSS_r / RSS_u) > χ²_L(α)`.
pub fn pairwise_granger_graph(series: &[Vec<f64>], max_lag: usize, alpha: f64) -> Result<EdgeSet> {
    let mut edges = EdgeSet::new();
    if series.len() < 2 {
        return Ok(edges);
    }
    let x = lag_matrix(series, max_lag)?;
    let crit = chi2_quantile(max_lag, alpha);
    let n = x.nrows() as f64;
    let ones = vec![1.0; x.nrows()];
    let block = |i: usize| (i * max_lag..(i + 1) * max_lag).collect::<Vec<_>>();
    for j in 0..series.len() {
        let m = Moments::new(&x, &response(&series[j], max_lag), &ones)?;
        let restricted = m.conditional_variance(&block(j))?;
        for i in (0..series.len()).filter(|&i| i != j) {
            let mut cols = block(j);
            cols.extend(block(i));
            let unrestricted = m.conditional_variance(&cols)?;
            if n * (restricted / unrestricted).ln() > crit {
                edges.insert((i, j));
            }
        }
    }
    Ok(edges)
}

const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 10_000;

/// Coordinate descent for `(1/2)βᵀGβ − cᵀβ + λ‖β‖₁` from `beta`.
fn lasso_cd(g: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, beta: &mut DVector<f64>) -> Result<()> {
    let p = c.len();
    // running Gβ
    let mut gb = g * &*beta;
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for k in 0..p {
            let gkk = g[(k, k)];
            if gkk <= 0.0 {
                continue;
            }
            let rho = c[k] - gb[k] + gkk * beta[k];
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / gkk;
            let delta = new - beta[k];
            if delta != 0.0 {
                gb.axpy(delta, &g.column(k), 1.0);
                beta[k] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < LASSO_TOL {
            return Ok(());
        }
    }
    Err(Error::NonConvergence(LASSO_MAX_SWEEPS))
}

/// Standardized Gram matrix and correlation vector of the selected rows.
fn gram(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64, DVector<f64>) {
    let n = rows.len() as f64;
    let p = x.ncols();
    let mean = DVector::from_fn(p, |c, _| rows.iter().map(|&r| x[(r, c)]).sum::<f64>() / n);
    let sd = DVector::from_fn(p, |c, _| {
        let v = rows.iter().map(|&r| (x[(r, c)] - mean[c]).powi(2)).sum::<f64>() / n;
        if v > 0.0 {
            v.sqrt()
        } else {
            1.0
        }
    });
    let ym = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    let z = DMatrix::from_fn(rows.len(), p, |i, c| (x[(rows[i], c)] - mean[c]) / sd[c]);
    let yc = DVector::from_fn(rows.len(), |i, _| y[rows[i]] - ym);
    (z.tr_mul(&z) / n, z.tr_mul(&yc) / n, mean, ym, sd)
}

fn lambda_grid(c: &DVector<f64>) -> Vec<f64> {
    let max = c.amax().max(1e-12);
    (0..20).map(|i| max * 10f64.powf(-3.0 * i as f64 / 19.0)).collect()
}

/// Lasso coefficients (standardized scale) of one target. `lambda = None`
/// picks it by 5-fold blocked cross-validation.
fn lasso_target(x: &DMatrix<f64>, y: &DVector<f64>, lambda: Option<f64>) -> Result<DVector<f64>> {
    let all: Vec<usize> = (0..x.nrows()).collect();
    let (g, c, _, _, _) = gram(x, y, &all);
    let lambda = match lambda {
        Some(l) => l,
        None => {
            let grid = lambda_grid(&c);
            let folds = 5;
            let n = x.nrows();
            let mut cv = vec![0.0; grid.len()];
            for f in 0..folds {
                let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
                let train: Vec<usize> = all.iter().copied().filter(|&r| r < lo || r >= hi).collect();
                let (gf, cf, mean, ym, sd) = gram(x, y, &train);
                let mut beta = DVector::zeros(x.ncols());
                for (li, &l) in grid.iter().enumerate() {
                    lasso_cd(&gf, &cf, l, &mut beta)?;
                    let sse: f64 = (lo..hi)
                        .map(|r| {
                            let pred: f64 = ym + (0..x.ncols()).map(|k| beta[k] * (x[(r, k)] - mean[k]) / sd[k]).sum::<f64>();
                            (y[r] - pred).powi(2)
                        })
                        .sum();
                    cv[li] += sse;
                }
            }
            let best = (0..grid.len()).min_by(|&a, &b| cv[a].total_cmp(&cv[b])).expect("nonempty grid");
            grid[best]
        }
    };
    let mut beta = DVector::zeros(x.ncols());
    lasso_cd(&g, &c, lambda, &mut beta)?;
    Ok(beta)
}

/// Edge `i → j` when any lag of `i` keeps a nonzero coefficient in `j`'s
/// L1-penalized regression on every series' lags. `lambda = None` selects the
/// penalty per target by cross-validation.
pub fn lasso_granger_graph(series: &[Vec<f64>], max_lag: usize, lambda: Option<f64>) -> Result<EdgeSet> {
    if lambda.is_some_and(|l| l.is_nan() || l < 0.0) {
        return Err(Error::InvalidParameter("lasso penalty must be non-negative".into()));
    }
    let mut edges = EdgeSet::new();
    if series.len() < 2 {
        return Ok(edges);
    }
    let x = lag_matrix(series, max_lag)?;
    for j in 0..series.len() {
        let beta = lasso_target(&x, &response(&series[j], max_lag), lambda)?;
        for i in (0..series.len()).filter(|&i| i != j) {
            if (0..max_lag).any(|l| beta[i * max_lag + l] != 0.0) {
                edges.insert((i, j));
            }
        }
    }
    Ok(edges)
}

/// Hourly pollutant series (category 0) and sensor metadata for a set of
/// synthetic node values. Sensor ids are `n00`, `n01`, ...
pub fn as_sensor_data(series: &[Vec<f64>], locations: &[(f64, f64)]) -> Result<(Vec<PollutantSeries>, Vec<SensorMeta>)> {
    let id = |i: usize| format!("n{i:02}");
    let ps = series
        .iter()
        .enumerate()
        .map(|(i, v)| PollutantSeries {
            sensor_id: id(i),
            category: Category(0),
            timestamps: (0..v.len() as i64).map(|h| SYNTHETIC_START + h * MINUTES_PER_HOUR).collect(),
            values: v.iter().map(|x| Some(*x)).collect(),
        })
        .collect();
    let meta = locations
        .iter()
        .enumerate()
        .map(|(i, &(lat, lon))| SensorMeta::new(id(i), "synthetic", lat, lon))
        .collect::<Result<_>>()?;
    Ok((ps, meta))
}

/// Pipeline settings for structure recovery on synthetic systems: no
/// distance or correlation gate, every neighbor is a candidate, one cluster.
pub fn simplified_pg_config(max_lag: usize, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.candidates.max_distance_km = f64::INFINITY;
    cfg.candidates.min_corr = 0.0;
    cfg.candidates.top_x = usize::MAX;
    cfg.lags = max_lag;
    cfg.refine.em.clusters = 1;
    cfg.refine.em.seed = seed;
    cfg.refine.neighbors = 5;
    cfg
}

/// Full pattern-guided pipeline on raw synthetic values. Edge `i → j` when
/// `i` is among `j`'s final parents in any cluster.
pub fn simplified_pg_graph(series: &[Vec<f64>], locations: &[(f64, f64)], config: &PipelineConfig) -> Result<EdgeSet> {
    let (ps, meta) = as_sensor_data(series, locations)?;
    let patterns = mine_patterns(&ps, config)?;
    let panel = Panel::from_model_space(
        SYNTHETIC_START,
        ps.iter().zip(series).map(|(p, v)| (p.key(), v.clone())).collect::<BTreeMap<_, _>>(),
        None,
    )?;
    let train = panel.timestamps();
    let index: BTreeMap<String, usize> = ps.iter().enumerate().map(|(i, p)| (p.sensor_id.clone(), i)).collect();
    let targets: Vec<SeriesKey> = ps.iter().map(PollutantSeries::key).collect();
    let per_target = crate::pipeline::parallel_map(&targets, config.threads, |target| -> Result<Vec<(usize, usize)>> {
        let cands = find_candidates(target, &patterns, &meta, config)?;
        let trained = train_target(&panel, target, &patterns, cands.as_ref(), &meta, &train, config)?;
        let j = index[&target.sensor];
        Ok(trained.model.neighbor_series().iter().map(|k| (index[&k.sensor], j)).collect())
    });
    let mut edges = EdgeSet::new();
    for r in per_target {
        edges.extend(r?);
    }
    Ok(edges)
}

/// Two-regime system on a model-space panel: `target` follows `driver` at
/// lag 1 with coefficient +0.9 in regime 0 and −0.9 in regime 1, and a 2-D
/// environment is shifted by ±3 per regime.
#[derive(Debug, Clone)]
pub struct RegimePanel {
    pub panel: Panel,
    pub target: SeriesKey,
    pub driver: SeriesKey,
    /// Regime of every panel row.
    pub regimes: Vec<usize>,
}

pub fn two_regime_panel(seed: u64, rows: usize) -> Result<RegimePanel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regimes = vec![0usize; rows];
    let mut r = 0;
    for v in regimes.iter_mut() {
        if rng.random::<f64>() < 0.02 {
            r = 1 - r;
        }
        *v = r;
    }
    let x: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
    let mut y = vec![0.0; rows];
    for t in 1..rows {
        let a = if regimes[t] == 0 { 0.9 } else { -0.9 };
        y[t] = a * x[t - 1] + 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    let env = regimes
        .iter()
        .map(|&r| {
            let c = if r == 0 { -3.0 } else { 3.0 };
            vec![c + rng.sample::<f64, _>(StandardNormal), c + rng.sample::<f64, _>(StandardNormal)]
        })
        .collect();
    let target = SeriesKey::new(Category(0), "t");
    let driver = SeriesKey::new(Category(0), "d");
    let panel = Panel::from_model_space(SYNTHETIC_START, BTreeMap::from([(target.clone(), y), (driver.clone(), x)]), Some(env))?;
    Ok(RegimePanel {
        panel,
        target,
        driver,
        regimes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeDatasetSpec {
    pub days: usize,
    /// Independent sensors placed closer to the target than the causer.
    pub noise_sensors: usize,
    /// Hours between a causer event and its arrival at the target.
    pub transport_lag: usize,
    /// Share of the causer's change that reaches the target while transport is on.
    pub transport: f64,
    pub seed: u64,
}

impl Default for RegimeDatasetSpec {
    fn default() -> Self {
        Self {
            days: 180,
            noise_sensors: 8,
            transport_lag: 2,
            transport: 0.9,
            seed: 0,
        }
    }
}

/// Measured-style dataset with a known, regime-dependent causer.
#[derive(Debug, Clone)]
pub struct RegimeDataset {
    pub series: Vec<PollutantSeries>,
    pub meteo: MeteoSeries,
    pub meta: Vec<SensorMeta>,
    pub target: SeriesKey,
    pub causer: String,
    /// Transport regime per hour; 1 means the causer reaches the target.
    pub regimes: Vec<usize>,
}

/// Hourly probability that a pollution event starts at an emitting sensor.
const EVENT_RATE: f64 = 0.04;
/// Extra hourly change during an event.
const EVENT_SIZE: f64 = 6.0;
/// Background hourly change.
const BASE_SD: f64 = 0.3;
/// Share of the excess over baseline kept from one hour to the next.
const REVERSION: f64 = 0.9;
/// Hourly switching probabilities into and out of the transport regime.
const TRANSPORT_ON: f64 = 1.0 / 16.0;
const TRANSPORT_OFF: f64 = 1.0 / 48.0;

/// Hourly concentration changes: background noise plus events lasting 4 to
/// 11 hours that start with probability `rate`.
fn shocks(rng: &mut ChaCha8Rng, hours: usize, rate: f64) -> Vec<f64> {
    let mut out = vec![0.0; hours];
    let mut event = 0usize;
    for v in out.iter_mut() {
        if event == 0 && rng.random::<f64>() < rate {
            event = rng.random_range(4..12);
        }
        let base: f64 = rng.sample::<f64, _>(StandardNormal) * BASE_SD;
        *v = if event > 0 {
            event -= 1;
            base + EVENT_SIZE
        } else {
            base
        };
    }
    out
}

fn integrate(changes: &[f64], baseline: f64) -> Vec<f64> {
    let mut level = baseline;
    changes
        .iter()
        .map(|c| {
            level = (baseline + REVERSION * (level - baseline) + c).max(1.0);
            level
        })
        .collect()
}

/// Target `T` receives the causer `C`'s changes after `transport_lag` hours,
/// but only while the wind regime points from `C` to `T` (about three
/// quarters of the time). The regime shows
/// in the meteorology. Noise sensors sit closer to `T` than `C` does.
pub fn regime_dataset(spec: &RegimeDatasetSpec) -> Result<RegimeDataset> {
    if spec.days < 2 || spec.transport_lag == 0 {
        return Err(Error::InvalidParameter(format!("regime dataset {spec:?}")));
    }
    let hours = spec.days * 24;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut regimes = vec![0usize; hours];
    let mut r = 0;
    for v in regimes.iter_mut() {
        if rng.random::<f64>() < if r == 0 { TRANSPORT_ON } else { TRANSPORT_OFF } {
            r = 1 - r;
        }
        *v = r;
    }
    let c_changes = shocks(&mut rng, hours, EVENT_RATE);
    // the target emits nothing of its own, so its events all arrive from C
    let mut t_changes = shocks(&mut rng, hours, 0.0);
    for t in spec.transport_lag..hours {
        if regimes[t] == 1 {
            t_changes[t] += spec.transport * c_changes[t - spec.transport_lag];
        }
    }
    let mut values = vec![
        ("T".to_string(), integrate(&t_changes, 60.0)),
        ("C".to_string(), integrate(&c_changes, 60.0)),
    ];
    for i in 0..spec.noise_sensors {
        values.push((format!("N{i}"), integrate(&shocks(&mut rng, hours, EVENT_RATE), 60.0)));
    }

    let origin = (31.0, 121.0);
    let km_to_deg = 1.0 / 111.2;
    let mut meta = vec![
        SensorMeta::new("T", "synthetic", origin.0, origin.1)?,
        SensorMeta::new("C", "synthetic", origin.0 + 12.0 * km_to_deg, origin.1)?,
    ];
    for i in 0..spec.noise_sensors {
        let d = rng.random_range(2.0..10.0) * km_to_deg;
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        meta.push(SensorMeta::new(
            format!("N{i}"),
            "synthetic",
            origin.0 + d * angle.sin(),
            origin.1 + d * angle.cos(),
        )?);
    }

    let timestamps: Vec<Minutes> = (0..hours as i64).map(|h| SYNTHETIC_START + h * MINUTES_PER_HOUR).collect();
    let series = values
        .into_iter()
        .map(|(id, v)| PollutantSeries {
            sensor_id: id,
            category: Category(0),
            timestamps: timestamps.clone(),
            values: v.into_iter().map(Some).collect(),
        })
        .collect();
    // wind direction and speed follow the regime; temperature, pressure and humidity are noise
    let vectors = regimes
        .iter()
        .map(|&r| {
            let mut n = || rng.sample::<f64, _>(StandardNormal);
            let (wd, ws) = if r == 1 { (180.0, 4.0) } else { (30.0, 2.0) };
            vec![15.0 + 5.0 * n(), 1010.0 + 3.0 * n(), 60.0 + 10.0 * n(), ws + 0.7 * n(), wd + 25.0 * n()]
        })
        .collect();
    Ok(RegimeDataset {
        series,
        meteo: MeteoSeries { timestamps, vectors },
        meta,
        target: SeriesKey::new(Category(0), "T"),
        causer: "C".into(),
        regimes,
    })
}
