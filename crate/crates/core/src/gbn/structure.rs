//! Causal scoring of neighbor series and the alternation between parameter
//! learning and structure re-selection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::design::{Design, Panel, ParentSpec};
use super::em::{em_learn, EmConfig, EmState};
use super::linalg::{chi2_quantile, Moments};
use super::model::CausalModel;
use crate::data::{Minutes, SeriesKey};
use crate::error::{Error, Result};

/// One series of a candidate sensor with the target timestamps its patterns
/// match. `None` means every row counts as matched.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSeries {
    pub key: SeriesKey,
    pub matched: Option<Vec<Minutes>>,
}

/// A neighbor sensor that may cause the target, in ranking order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSensor {
    pub sensor: String,
    pub series: Vec<CandidateSeries>,
}

/// Design over every row available for training, with all local and
/// candidate series, plus the rows that count for causal scoring.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub design: Design,
    pub local: Vec<SeriesKey>,
    pub candidates: Vec<CandidateSensor>,
    /// Rows inside pattern-matched windows.
    pub in_window: Vec<bool>,
    /// Per candidate, per series, per row: the row's timestamp is matched.
    matched: Vec<Vec<Vec<bool>>>,
}

impl TrainingSet {
    /// `windows = None` scores causality on every training row.
    pub fn new(
        panel: &Panel,
        target: &SeriesKey,
        local: Vec<SeriesKey>,
        candidates: Vec<CandidateSensor>,
        lags: usize,
        train: &[Minutes],
        windows: Option<&[Minutes]>,
    ) -> Result<Self> {
        if lags == 0 {
            return Err(Error::InvalidParameter("lag depth must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &candidates {
            if c.sensor == target.sensor || !seen.insert(c.sensor.clone()) {
                return Err(Error::InvalidParameter(format!("candidate sensor {} repeats or is local", c.sensor)));
            }
        }
        let series: Vec<SeriesKey> = local
            .iter()
            .cloned()
            .chain(candidates.iter().flat_map(|c| c.series.iter().map(|s| s.key.clone())))
            .collect();
        let design = Design::build(panel, target, &series, lags, train)?;
        let in_window = match windows {
            None => vec![true; design.rows()],
            Some(w) => {
                let set: BTreeSet<Minutes> = w.iter().copied().collect();
                design.timestamps.iter().map(|t| set.contains(t)).collect()
            }
        };
        let matched = candidates
            .iter()
            .map(|c| {
                c.series
                    .iter()
                    .map(|s| match &s.matched {
                        None => vec![true; design.rows()],
                        Some(m) => {
                            let set: BTreeSet<Minutes> = m.iter().copied().collect();
                            design.timestamps.iter().map(|t| set.contains(t)).collect()
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            design,
            local,
            candidates,
            in_window,
            matched,
        })
    }

    pub fn target(&self) -> &SeriesKey {
        &self.design.target
    }

    pub fn lags(&self) -> usize {
        self.design.lags
    }

    pub fn local_spec(&self) -> ParentSpec {
        ParentSpec::local_only(self.target().clone(), self.local.clone(), self.lags())
    }

    fn window_weights(&self) -> Vec<f64> {
        self.in_window.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcConfig {
    /// Significance level of the χ² scaling.
    pub alpha: f64,
    /// A candidate needs a score above this to become a parent.
    pub threshold: f64,
}

impl Default for GcConfig {
    fn default() -> Self {
        Self { alpha: 0.05, threshold: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcScore {
    pub score: f64,
    pub series: SeriesKey,
    pub lag: usize,
}

/// Best score over the candidate's series and lags:
/// `matches · max(0, Σ₁ − Σ₂) / (Σ₂ · χ²_L(α))`, where Σ₁ is the residual
/// variance given `base` and Σ₂ adds the candidate series at one lag.
/// `matches` counts weighted rows whose timestamp the series' patterns match.
pub fn gc_score(ts: &TrainingSet, moments: &Moments, weights: &[f64], base: &[usize], candidate: usize, alpha: f64) -> Result<Option<GcScore>> {
    let crit = chi2_quantile(ts.lags(), alpha);
    let sigma1 = moments.conditional_variance(base)?;
    let mut best: Option<GcScore> = None;
    for (si, s) in ts.candidates[candidate].series.iter().enumerate() {
        let matches = ts.matched[candidate][si].iter().zip(weights).filter(|(m, w)| **m && **w > 0.0).count() as f64;
        for lag in 1..=ts.lags() {
            let col = ts.design.slot_index(&s.key, lag).expect("candidate columns are in the design");
            let mut cols = base.to_vec();
            cols.push(col);
            let sigma2 = moments.conditional_variance(&cols)?;
            let score = matches * (sigma1 - sigma2).max(0.0) / (sigma2 * crit);
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(GcScore {
                    score,
                    series: s.key.clone(),
                    lag,
                });
            }
        }
    }
    Ok(best)
}

/// Greedy forward selection: each round scores the remaining candidates
/// conditioned on the local block and the neighbors chosen so far, and adds
/// the best one if it clears the threshold. Ties go to the earlier candidate.
pub fn select_neighbors(ts: &TrainingSet, weights: &[f64], n: usize, gc: &GcConfig) -> Result<Vec<GcScore>> {
    if n == 0 || ts.candidates.is_empty() {
        return Ok(Vec::new());
    }
    let moments = Moments::new(&ts.design.x, &ts.design.y, weights)?;
    let spec = ts.local_spec();
    let mut base = ts.design.parent_columns(&spec)?;
    let mut chosen: Vec<GcScore> = Vec::new();
    let mut used = vec![false; ts.candidates.len()];
    while chosen.len() < n {
        let mut best: Option<(usize, GcScore)> = None;
        for (ci, _) in ts.candidates.iter().enumerate().filter(|(i, _)| !used[*i]) {
            if let Some(s) = gc_score(ts, &moments, weights, &base, ci, gc.alpha)? {
                if best.as_ref().is_none_or(|(_, b)| s.score > b.score) {
                    best = Some((ci, s));
                }
            }
        }
        match best {
            Some((ci, s)) if s.score > gc.threshold => {
                used[ci] = true;
                base.extend(ts.design.series_columns(&s.series).expect("candidate columns are in the design"));
                chosen.push(s);
            }
            _ => break,
        }
    }
    Ok(chosen)
}

/// Parents from scoring every candidate on the pattern-matched rows.
pub fn init_structure(ts: &TrainingSet, n: usize, gc: &GcConfig) -> Result<ParentSpec> {
    let weights = ts.window_weights();
    if weights.iter().sum::<f64>() == 0.0 {
        log::warn!("{}: no rows inside matched windows; starting local-only", ts.target());
        return Ok(ts.local_spec());
    }
    let chosen = select_neighbors(ts, &weights, n, gc)?;
    ts.local_spec().with_neighbors(chosen.into_iter().map(|s| s.series).collect())
}

/// Which rows re-score the structure of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterRows {
    /// Rows tagged with the cluster.
    #[default]
    Tagged,
    /// Every row, weighted by its responsibility.
    Weighted,
}

/// Re-selects each cluster's neighbors on the rows belonging to it. Clusters
/// with fewer than twice as many rows as parent slots keep their parents.
pub fn structure_reconstruction(
    ts: &TrainingSet,
    state: &EmState,
    current: &[ParentSpec],
    n: usize,
    gc: &GcConfig,
    rows: ClusterRows,
) -> Result<Vec<ParentSpec>> {
    let mut out = Vec::with_capacity(current.len());
    for (k, spec) in current.iter().enumerate() {
        let weights: Vec<f64> = (0..ts.design.rows())
            .map(|t| {
                if !ts.in_window[t] {
                    return 0.0;
                }
                match rows {
                    ClusterRows::Tagged => f64::from(u8::from(state.tags[t] == k)),
                    ClusterRows::Weighted => state.gamma[(t, k)],
                }
            })
            .collect();
        let mass: f64 = weights.iter().sum();
        if mass < 2.0 * spec.width() as f64 {
            log::warn!("{}: cluster {k} has too few rows ({mass:.1}) to re-select parents", ts.target());
            out.push(spec.clone());
            continue;
        }
        let chosen = select_neighbors(ts, &weights, n, gc)?;
        out.push(ts.local_spec().with_neighbors(chosen.into_iter().map(|s| s.series).collect())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub em: EmConfig,
    /// Maximum neighbors per cluster.
    pub neighbors: usize,
    pub gc: GcConfig,
    pub cluster_rows: ClusterRows,
    pub max_outer: usize,
    /// Outer loop stops once the log-likelihood moves by less than `tol · |LL|`.
    pub outer_tol: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            neighbors: 3,
            gc: GcConfig::default(),
            cluster_rows: ClusterRows::Tagged,
            max_outer: 10,
            outer_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: CausalModel,
    pub state: EmState,
    pub parents: Vec<ParentSpec>,
    pub outer_iterations: usize,
}

fn columns_of(ts: &TrainingSet, parents: &[ParentSpec]) -> Result<Vec<Vec<usize>>> {
    parents.iter().map(|p| ts.design.parent_columns(p)).collect()
}

/// Initial structure, then EM and per-cluster structure re-selection in
/// turn until the log-likelihood settles. Every EM run starts from the same
/// seeded k-means partition, so cluster identities carry over and equal
/// structures give equal models.
pub fn refine(ts: &TrainingSet, panel: &Panel, config: &RefineConfig) -> Result<Trained> {
    let k = config.em.clusters;
    let init = init_structure(ts, config.neighbors, &config.gc)?;
    let mut parents = vec![init; k];
    let mut state = em_learn(&ts.design, &columns_of(ts, &parents)?, &config.em, None)?;
    let mut outer = 1;
    while config.neighbors > 0 && outer < config.max_outer {
        let next = structure_reconstruction(ts, &state, &parents, config.neighbors, &config.gc, config.cluster_rows)?;
        let next_state = em_learn(&ts.design, &columns_of(ts, &next)?, &config.em, None)?;
        outer += 1;
        let (prev, now) = (state.log_likelihood(), next_state.log_likelihood());
        parents = next;
        state = next_state;
        if (now - prev).abs() < config.outer_tol * now.abs() {
            break;
        }
    }
    let model = CausalModel::from_state(panel, ts.target(), &parents, &state, config.neighbors)?;
    Ok(Trained {
        model,
        state,
        parents,
        outer_iterations: outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Category;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::collections::BTreeMap;

    fn key(s: &str) -> SeriesKey {
        SeriesKey::new(Category(0), s)
    }

    /// `y_t = Σ coef·x_{t−lag} + noise` with independent white-noise drivers.
    fn driven(seed: u64, rows: usize, drivers: &[(&str, f64, usize)]) -> Panel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = BTreeMap::new();
        let mut y: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        for &(name, coef, lag) in drivers {
            let x: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
            for t in lag..rows {
                y[t] += coef * x[t - lag];
            }
            map.insert(key(name), x);
        }
        map.insert(key("y"), y);
        Panel::from_model_space(0, map, None).unwrap()
    }

    fn training(panel: &Panel, names: &[&str], matched: Option<Vec<Minutes>>) -> TrainingSet {
        let cands = names
            .iter()
            .map(|n| CandidateSensor {
                sensor: n.to_string(),
                series: vec![CandidateSeries {
                    key: key(n),
                    matched: matched.clone(),
                }],
            })
            .collect();
        TrainingSet::new(panel, &key("y"), vec![key("y")], cands, 3, &panel.timestamps(), None).unwrap()
    }

    fn score(ts: &TrainingSet, c: usize) -> GcScore {
        let w = vec![1.0; ts.design.rows()];
        let m = Moments::new(&ts.design.x, &ts.design.y, &w).unwrap();
        let base = ts.design.parent_columns(&ts.local_spec()).unwrap();
        gc_score(ts, &m, &w, &base, c, 0.05).unwrap().unwrap()
    }

    #[test]
    fn planted_lag_is_found() {
        let panel = driven(1, 2000, &[("x", 0.8, 2)]);
        let ts = training(&panel, &["x"], Some(panel.timestamps().into_iter().step_by(20).collect()));
        let s = score(&ts, 0);
        assert!(s.score > 1.0);
        assert_eq!(s.lag, 2);

        // Oracle: direct least squares of y on its own lags, then adding x_{t-2}.
        let d = &ts.design;
        let own: Vec<usize> = (0..3).collect();
        let base = crate::gbn::conditional_variance(&d.x, &d.y, &own).unwrap();
        let with = crate::gbn::conditional_variance(&d.x, &d.y, &[0, 1, 2, 4]).unwrap();
        let m = d.timestamps.iter().filter(|t| (**t / 60) % 20 == 0).count() as f64;
        let expected = m * (base - with) / (with * chi2_quantile(3, 0.05));
        assert!((s.score - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn no_matches_no_score() {
        let panel = driven(2, 500, &[("x", 0.8, 1)]);
        let ts = training(&panel, &["x"], Some(vec![]));
        assert_eq!(score(&ts, 0).score, 0.0);
    }

    #[test]
    fn duplicate_driver_adds_nothing() {
        // a candidate identical to a conditioning column cannot reduce variance
        let panel = driven(3, 300, &[]);
        let y: Vec<f64> = panel.timestamps().iter().map(|t| panel.value(&key("y"), *t).unwrap()).collect();
        let map = BTreeMap::from([(key("y"), y.clone()), (key("z"), y)]);
        let panel = Panel::from_model_space(0, map, None).unwrap();
        let ts = training(&panel, &["z"], None);
        assert!(score(&ts, 0).score < 1e-6);
    }

    #[test]
    fn affine_rescaling_keeps_score() {
        let panel = driven(4, 800, &[("x", 0.5, 1)]);
        let ts = training(&panel, &["x"], None);
        let a = score(&ts, 0);
        let mut map = BTreeMap::new();
        for k in [key("x"), key("y")] {
            let v: Vec<f64> = panel.timestamps().iter().map(|t| panel.value(&k, *t).unwrap()).collect();
            let v = if k == key("x") { v.iter().map(|x| 7.5 * x - 3.0).collect() } else { v };
            map.insert(k, v);
        }
        let scaled = Panel::from_model_space(0, map, None).unwrap();
        let b = score(&training(&scaled, &["x"], None), 0);
        assert_eq!(a.lag, b.lag);
        assert!((a.score - b.score).abs() < 1e-6 * a.score);
    }

    #[test]
    fn selection_order_and_clipping() {
        let panel = driven(5, 3000, &[("a", 0.6, 1), ("b", 0.3, 2), ("c", 0.0, 1)]);
        let ts = training(&panel, &["c", "b", "a"], None);
        let p = init_structure(&ts, 2, &GcConfig::default()).unwrap();
        assert_eq!(p.neighbors, vec![key("a"), key("b")]);
        let p = init_structure(&ts, 10, &GcConfig::default()).unwrap();
        assert!(p.neighbors.len() <= 3 && p.neighbors[..2] == [key("a"), key("b")]);
        assert!(init_structure(&ts, 0, &GcConfig::default()).unwrap().neighbors.is_empty());
    }

    #[test]
    fn local_only_refine_is_single_pass() {
        let panel = driven(6, 600, &[("x", 0.8, 1)]);
        let ts = training(&panel, &["x"], None);
        let cfg = RefineConfig {
            neighbors: 0,
            em: EmConfig {
                clusters: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let t = refine(&ts, &panel, &cfg).unwrap();
        assert_eq!(t.outer_iterations, 1);
        assert!(t.parents[0].neighbors.is_empty());
    }

    #[test]
    fn stable_structure_stops_after_two_rounds() {
        let panel = driven(7, 1500, &[("x", 0.8, 1)]);
        let ts = training(&panel, &["x"], None);
        let cfg = RefineConfig {
            neighbors: 1,
            em: EmConfig {
                clusters: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let t = refine(&ts, &panel, &cfg).unwrap();
        assert_eq!(t.outer_iterations, 2);
        assert_eq!(t.parents[0].neighbors, vec![key("x")]);
    }

    #[test]
    fn reconstruction_never_picks_local_or_duplicates() {
        let panel = driven(8, 1000, &[("a", 0.5, 1), ("b", 0.5, 2)]);
        let ts = training(&panel, &["a", "b"], None);
        let cfg = RefineConfig {
            neighbors: 2,
            em: EmConfig {
                clusters: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let t = refine(&ts, &panel, &cfg).unwrap();
        for p in &t.parents {
            let sensors: BTreeSet<&str> = p.neighbors.iter().map(|n| n.sensor.as_str()).collect();
            assert_eq!(sensors.len(), p.neighbors.len());
            assert!(!sensors.contains("y"));
        }
    }

    #[test]
    fn thin_cluster_keeps_structure() {
        let panel = driven(9, 400, &[("a", 0.5, 1)]);
        let ts = training(&panel, &["a"], None);
        let parents = vec![ts.local_spec(); 2];
        let cols: Vec<Vec<usize>> = parents.iter().map(|p| ts.design.parent_columns(p).unwrap()).collect();
        let mut state = em_learn(
            &ts.design,
            &cols,
            &EmConfig {
                clusters: 2,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        // every row tagged 0: cluster 1 has nothing to re-score on
        state.tags = vec![0; ts.design.rows()];
        let out = structure_reconstruction(&ts, &state, &parents, 1, &GcConfig::default(), ClusterRows::Tagged).unwrap();
        assert_eq!(out[1], parents[1]);
        assert_eq!(out[0].neighbors, vec![key("a")]);
    }
}
