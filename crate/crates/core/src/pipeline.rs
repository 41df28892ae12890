//! End-to-end orchestration: symbolize, mine, select candidate causers,
//! train and evaluate per target.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::data::{haversine_km, sax_discretize, MeteoSeries, Minutes, PollutantSeries, SaxParams, SensorMeta, SeriesKey};
use crate::error::{Error, Result};
use crate::fep::{mine_feps, PatternSet};
use crate::gbn::{
    evaluate, refine, CandidateSensor, CandidateSeries, CausalModel, Evaluation, Panel, PathwayNodeModel, RefineConfig, Trained, TrainingSet,
};
use crate::matcher::{candidate_causers, match_timestamps, matched_training_windows, CandidateParams, CandidateSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub sax: SaxParams,
    /// Minimum fraction of days a pattern must occur on.
    pub sigma: f64,
    /// Maximum minutes between consecutive pattern elements.
    pub delta_t: u32,
    pub candidates: CandidateParams,
    pub lags: usize,
    pub refine: RefineConfig,
    /// Skip pattern mining: every sensor within the distance gate is a
    /// candidate and every training row is scored.
    pub no_patterns: bool,
    /// Single cluster, no environment-driven confounder.
    pub no_confounders: bool,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sax: SaxParams::default(),
            sigma: 0.1,
            delta_t: 60,
            candidates: CandidateParams::default(),
            lags: 3,
            refine: RefineConfig::default(),
            no_patterns: false,
            no_confounders: false,
            threads: 1,
        }
    }
}

impl PipelineConfig {
    /// Refinement settings after applying the ablation flags.
    pub fn effective_refine(&self) -> RefineConfig {
        let mut r = self.refine;
        if self.no_confounders {
            r.em.clusters = 1;
        }
        r
    }
}

/// Maps `f` over `items` on up to `threads` workers; output order follows
/// input order whatever the worker count.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every item ran"))
        .collect()
}

/// Keeps only readings whose timestamp passes `keep`.
pub fn restrict_series(series: &[PollutantSeries], keep: impl Fn(Minutes) -> bool) -> Vec<PollutantSeries> {
    series
        .iter()
        .map(|s| {
            let (timestamps, values) = s
                .timestamps
                .iter()
                .zip(&s.values)
                .filter(|(t, _)| keep(**t))
                .map(|(t, v)| (*t, *v))
                .unzip();
            PollutantSeries {
                sensor_id: s.sensor_id.clone(),
                category: s.category,
                timestamps,
                values,
            }
        })
        .collect()
}

/// Symbolizes and mines every series. Series that cannot be symbolized or
/// yield an empty database are skipped with a warning.
pub fn mine_patterns(series: &[PollutantSeries], config: &PipelineConfig) -> Result<Vec<PatternSet>> {
    if series.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let results = parallel_map(series, config.threads, |s| {
        let db = sax_discretize(s, config.sax)?;
        mine_feps(&db, config.sigma, config.delta_t)
    });
    let mut out = Vec::new();
    for (s, r) in series.iter().zip(results) {
        match r {
            Ok(p) => out.push(p),
            Err(e @ (Error::EmptyDatabase | Error::DegenerateSeries(_))) => log::warn!("{}: {e}", s.key()),
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    Ok(out)
}

/// Candidate causers of `target`, or `None` when it has no patterns.
pub fn find_candidates(target: &SeriesKey, patterns: &[PatternSet], meta: &[SensorMeta], config: &PipelineConfig) -> Result<Option<CandidateSet>> {
    match candidate_causers(target, patterns, meta, &config.candidates) {
        Ok(c) => Ok(Some(c)),
        Err(Error::NoPatterns(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Every other sensor in the panel within the distance gate, nearest first.
fn sensors_in_range(panel: &Panel, target: &SeriesKey, meta: &[SensorMeta], max_km: f64) -> Result<Vec<String>> {
    let pos: BTreeMap<&str, (f64, f64)> = meta.iter().map(|m| (m.sensor_id.as_str(), m.position())).collect();
    let origin = *pos
        .get(target.sensor.as_str())
        .ok_or_else(|| Error::UnknownSensor(target.sensor.clone()))?;
    let mut out = Vec::new();
    for s in panel.sensors().into_iter().filter(|s| *s != target.sensor) {
        let p = *pos.get(s.as_str()).ok_or_else(|| Error::UnknownSensor(s.clone()))?;
        let d = haversine_km(origin, p);
        if d <= max_km {
            out.push((d, s));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    Ok(out.into_iter().map(|(_, s)| s).collect())
}

/// Assembles the training design of one target. Without `no_patterns`, the
/// candidate set decides which neighbors are scored and the pattern matches
/// decide which rows count.
pub fn training_set(
    panel: &Panel,
    target: &SeriesKey,
    patterns: &[PatternSet],
    candidates: Option<&CandidateSet>,
    meta: &[SensorMeta],
    train: &[Minutes],
    config: &PipelineConfig,
) -> Result<TrainingSet> {
    let local = panel.sensor_series(&target.sensor);
    if config.no_patterns {
        let cands = sensors_in_range(panel, target, meta, config.candidates.max_distance_km)?
            .into_iter()
            .map(|s| CandidateSensor {
                series: panel
                    .sensor_series(&s)
                    .into_iter()
                    .map(|key| CandidateSeries { key, matched: None })
                    .collect(),
                sensor: s,
            })
            .collect();
        return TrainingSet::new(panel, target, local, cands, config.lags, train, None);
    }

    let by_key: BTreeMap<&SeriesKey, &PatternSet> = patterns.iter().map(|p| (&p.key, p)).collect();
    let Some(target_ps) = by_key.get(target) else {
        log::warn!("{target}: no patterns; training local-only on every row");
        return TrainingSet::new(panel, target, local, Vec::new(), config.lags, train, None);
    };
    let target_ts = target_ps.start_timestamps();
    let lag = config.candidates.lag;
    let mut cands = Vec::new();
    let mut window_sets: Vec<&PatternSet> = Vec::new();
    for c in candidates.map(|c| c.candidates.as_slice()).unwrap_or_default() {
        let series = panel
            .sensor_series(&c.sensor)
            .into_iter()
            .map(|key| {
                let matched = match by_key.get(&key) {
                    Some(ps) => {
                        window_sets.push(ps);
                        match_timestamps(&target_ts, &ps.start_timestamps(), lag).target
                    }
                    None => Vec::new(),
                };
                CandidateSeries { key, matched: Some(matched) }
            })
            .collect::<Vec<_>>();
        if !series.is_empty() {
            cands.push(CandidateSensor {
                sensor: c.sensor.clone(),
                series,
            });
        }
    }
    let windows = matched_training_windows(target_ps, &window_sets, lag);
    TrainingSet::new(panel, target, local, cands, config.lags, train, Some(&windows))
}

/// Training set plus refinement for one target.
#[allow(clippy::too_many_arguments)]
pub fn train_target(
    panel: &Panel,
    target: &SeriesKey,
    patterns: &[PatternSet],
    candidates: Option<&CandidateSet>,
    meta: &[SensorMeta],
    train: &[Minutes],
    config: &PipelineConfig,
) -> Result<Trained> {
    let ts = training_set(panel, target, patterns, candidates, meta, train, config)?;
    refine(&ts, panel, &config.effective_refine())
}

/// Held-out accuracies of a trained model and of its local-only
/// counterpart, for pathway expansion.
pub fn pathway_node(ts: &TrainingSet, panel: &Panel, model: CausalModel, test: &[Minutes], config: &PipelineConfig) -> Result<PathwayNodeModel> {
    let mut local_cfg = config.effective_refine();
    local_cfg.neighbors = 0;
    let local = refine(ts, panel, &local_cfg)?;
    Ok(PathwayNodeModel {
        local_accuracy: evaluate(&local.model, panel, test)?.accuracy,
        full_accuracy: evaluate(&model, panel, test)?.accuracy,
        model,
    })
}

/// The full method and its two ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Full,
    NoPatterns,
    NoConfounders,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoPatterns, Variant::NoConfounders];

    /// `config` with this variant's ablation flags, others cleared.
    pub fn apply(self, config: &PipelineConfig) -> PipelineConfig {
        PipelineConfig {
            no_patterns: self == Variant::NoPatterns,
            no_confounders: self == Variant::NoConfounders,
            ..*config
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoPatterns => "no_patterns",
            Variant::NoConfounders => "no_confounders",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TargetRun {
    pub trained: Trained,
    pub evaluation: Evaluation,
}

/// Mines the training part of `series`, then trains every target on the
/// `train` timestamps and scores it on `test`.
#[allow(clippy::too_many_arguments)]
pub fn run_targets(
    series: &[PollutantSeries],
    meteo: Option<&MeteoSeries>,
    meta: &[SensorMeta],
    targets: &[SeriesKey],
    train: &[Minutes],
    test: &[Minutes],
    config: &PipelineConfig,
) -> Result<Vec<TargetRun>> {
    let patterns = if config.no_patterns {
        Vec::new()
    } else {
        let keep: BTreeSet<Minutes> = train.iter().copied().collect();
        mine_patterns(&restrict_series(series, |t| keep.contains(&t)), config)?
    };
    let panel = Panel::from_pollutants(series, meteo)?;
    let per_target = |target: &SeriesKey| -> Result<TargetRun> {
        let candidates = if config.no_patterns {
            None
        } else {
            find_candidates(target, &patterns, meta, config)?
        };
        let trained = train_target(&panel, target, &patterns, candidates.as_ref(), meta, train, config)?;
        let evaluation = evaluate(&trained.model, &panel, test)?;
        Ok(TargetRun { trained, evaluation })
    };
    parallel_map(targets, config.threads, per_target).into_iter().collect()
}
