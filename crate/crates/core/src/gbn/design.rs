//! Aligned hourly panel of model-space series and the lagged design rows
//! built from it.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{diff_normalize, MeteoSeries, Minutes, PollutantSeries, SeriesKey, MINUTES_PER_HOUR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct PanelSeries {
    values: Vec<Option<f64>>,
    mean: f64,
    std: f64,
    /// Raw concentrations, when the series came from measurements.
    levels: Option<Vec<Option<f64>>>,
}

/// Every series on one hourly grid. Values are in model space: z-normalized
/// one-hour differences for measured data, the values themselves for
/// synthetic systems. Environment vectors are standardized per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    start: Minutes,
    len: usize,
    series: BTreeMap<SeriesKey, PanelSeries>,
    env: Vec<Option<Vec<f64>>>,
    env_dim: usize,
}

impl Panel {
    /// Differences and normalizes each concentration series. Series too short
    /// to difference are skipped with a warning.
    pub fn from_pollutants(series: &[PollutantSeries], meteo: Option<&MeteoSeries>) -> Result<Self> {
        let (start, end) = series
            .iter()
            .flat_map(|s| s.timestamps.iter().copied())
            .fold(None, |acc: Option<(Minutes, Minutes)>, t| match acc {
                None => Some((t, t)),
                Some((a, b)) => Some((a.min(t), b.max(t))),
            })
            .ok_or_else(|| Error::NoUsableRows("no pollutant readings".into()))?;
        let len = ((end - start) / MINUTES_PER_HOUR + 1) as usize;
        let index = |t: Minutes| {
            let off = t - start;
            (off >= 0 && off % MINUTES_PER_HOUR == 0)
                .then_some((off / MINUTES_PER_HOUR) as usize)
                .filter(|&i| i < len)
        };

        let mut map = BTreeMap::new();
        for s in series {
            let diff = match diff_normalize(s) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("skipping {}: {e}", s.key());
                    continue;
                }
            };
            let mut values = vec![None; len];
            for (t, v) in diff.timestamps.iter().zip(&diff.values) {
                if let Some(i) = index(*t) {
                    values[i] = *v;
                }
            }
            let mut levels = vec![None; len];
            for (t, v) in s.timestamps.iter().zip(&s.values) {
                if let Some(i) = index(*t) {
                    levels[i] = *v;
                }
            }
            map.insert(
                s.key(),
                PanelSeries {
                    values,
                    mean: diff.mean,
                    std: diff.std,
                    levels: Some(levels),
                },
            );
        }

        let mut env = vec![None; len];
        let mut env_dim = 0;
        if let Some(m) = meteo {
            env_dim = m.dim();
            for (t, v) in m.timestamps.iter().zip(&m.vectors) {
                if let Some(i) = index(*t) {
                    env[i] = Some(v.clone());
                }
            }
        }
        let mut panel = Self {
            start,
            len,
            series: map,
            env,
            env_dim,
        };
        panel.standardize_env();
        Ok(panel)
    }

    /// Panel over series that are already in model space (mean 0, scale 1
    /// for re-integration purposes).
    pub fn from_model_space(start: Minutes, series: BTreeMap<SeriesKey, Vec<f64>>, env: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let len = series.values().map(Vec::len).max().unwrap_or(0);
        if series.values().any(|v| v.len() != len) {
            return Err(Error::InvalidParameter("model-space series differ in length".into()));
        }
        let env_dim = env.as_ref().and_then(|e| e.first()).map_or(0, Vec::len);
        let env = match env {
            Some(e) if e.len() == len => e.into_iter().map(Some).collect(),
            Some(_) => return Err(Error::InvalidParameter("environment length differs from series".into())),
            None => vec![None; len],
        };
        let mut panel = Self {
            start,
            len,
            series: series
                .into_iter()
                .map(|(k, v)| {
                    (
                        k,
                        PanelSeries {
                            values: v.into_iter().map(Some).collect(),
                            mean: 0.0,
                            std: 1.0,
                            levels: None,
                        },
                    )
                })
                .collect(),
            env,
            env_dim,
        };
        panel.standardize_env();
        Ok(panel)
    }

    fn standardize_env(&mut self) {
        for d in 0..self.env_dim {
            let vals: Vec<f64> = self.env.iter().flatten().map(|v| v[d]).collect();
            if vals.is_empty() {
                return;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let scale = if std > 1e-12 { std } else { 1.0 };
            for v in self.env.iter_mut().flatten() {
                v[d] = (v[d] - mean) / scale;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    pub fn start(&self) -> Minutes {
        self.start
    }

    pub fn timestamps(&self) -> Vec<Minutes> {
        (0..self.len as i64).map(|i| self.start + i * MINUTES_PER_HOUR).collect()
    }

    fn index_of(&self, t: Minutes) -> Option<usize> {
        let off = t - self.start;
        if off < 0 || off % MINUTES_PER_HOUR != 0 {
            return None;
        }
        let i = (off / MINUTES_PER_HOUR) as usize;
        (i < self.len).then_some(i)
    }

    pub fn keys(&self) -> impl Iterator<Item = &SeriesKey> {
        self.series.keys()
    }

    pub fn contains(&self, key: &SeriesKey) -> bool {
        self.series.contains_key(key)
    }

    /// All series of one sensor, in category order.
    pub fn sensor_series(&self, sensor: &str) -> Vec<SeriesKey> {
        self.series.keys().filter(|k| k.sensor == sensor).cloned().collect()
    }

    pub fn sensors(&self) -> Vec<String> {
        self.series
            .keys()
            .map(|k| k.sensor.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn value(&self, key: &SeriesKey, t: Minutes) -> Option<f64> {
        let i = self.index_of(t)?;
        self.series.get(key)?.values[i]
    }

    /// Raw concentration at `t` for measured series.
    pub fn level(&self, key: &SeriesKey, t: Minutes) -> Option<f64> {
        let i = self.index_of(t)?;
        self.series.get(key)?.levels.as_ref()?[i]
    }

    pub fn has_levels(&self, key: &SeriesKey) -> bool {
        self.series.get(key).is_some_and(|s| s.levels.is_some())
    }

    /// Mean and standard deviation mapping model space back to raw changes.
    pub fn scale(&self, key: &SeriesKey) -> Option<(f64, f64)> {
        self.series.get(key).map(|s| (s.mean, s.std))
    }

    /// Environment vector at `t`; always present (and empty) when the panel
    /// has no environment data.
    pub fn env(&self, t: Minutes) -> Option<&[f64]> {
        if self.env_dim == 0 {
            return self.index_of(t).map(|_| &[][..]);
        }
        self.env[self.index_of(t)?].as_deref()
    }

    /// Value of `key` `lag` hours before `t`.
    pub fn lagged(&self, key: &SeriesKey, t: Minutes, lag: usize) -> Option<f64> {
        self.value(key, t - lag as Minutes * MINUTES_PER_HOUR)
    }
}

/// One regressor: a series at a lag in hours.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub series: SeriesKey,
    pub lag: usize,
}

/// Parents of a target: lags `1..=lags` of every local series (all
/// categories at the target's sensor) followed by the same lags of each
/// neighbor series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentSpec {
    pub target: SeriesKey,
    pub local: Vec<SeriesKey>,
    pub neighbors: Vec<SeriesKey>,
    pub lags: usize,
}

impl ParentSpec {
    pub fn local_only(target: SeriesKey, local: Vec<SeriesKey>, lags: usize) -> Self {
        Self {
            target,
            local,
            neighbors: Vec::new(),
            lags,
        }
    }

    pub fn with_neighbors(&self, neighbors: Vec<SeriesKey>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &neighbors {
            if n.sensor == self.target.sensor || !seen.insert(&n.sensor) {
                return Err(Error::InvalidParameter(format!("neighbor {n} repeats a sensor or is local")));
            }
        }
        Ok(Self { neighbors, ..self.clone() })
    }

    pub fn series(&self) -> impl Iterator<Item = &SeriesKey> {
        self.local.iter().chain(&self.neighbors)
    }

    pub fn width(&self) -> usize {
        (self.local.len() + self.neighbors.len()) * self.lags
    }

    pub fn slots(&self) -> Vec<Slot> {
        self.series()
            .flat_map(|s| (1..=self.lags).map(move |lag| Slot { series: s.clone(), lag }))
            .collect()
    }

    /// Regressor vector at `t` in slot order.
    pub fn values_at(&self, panel: &Panel, t: Minutes) -> Result<Vec<f64>> {
        self.slots()
            .iter()
            .map(|s| panel.lagged(&s.series, t, s.lag))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::MissingLags(format!("{} at {}", self.target, crate::data::format_timestamp(t))))
    }
}

/// Response, lagged regressors and environment for a set of timestamps.
#[derive(Debug, Clone)]
pub struct Design {
    pub target: SeriesKey,
    pub lags: usize,
    pub timestamps: Vec<Minutes>,
    pub slots: Vec<Slot>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    env: Vec<f64>,
    env_dim: usize,
}

impl Design {
    /// Rows for every timestamp where the target, every lag of every listed
    /// series and the environment are present.
    pub fn build(panel: &Panel, target: &SeriesKey, series: &[SeriesKey], lags: usize, timestamps: &[Minutes]) -> Result<Self> {
        let mut uniq: Vec<&SeriesKey> = Vec::new();
        for s in series {
            if !uniq.contains(&s) {
                uniq.push(s);
            }
        }
        let slots: Vec<Slot> = uniq
            .iter()
            .flat_map(|s| (1..=lags).map(move |lag| Slot { series: (*s).clone(), lag }))
            .collect();
        let mut ts = Vec::new();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut env = Vec::new();
        'rows: for &t in timestamps {
            let Some(y) = panel.value(target, t) else { continue };
            let Some(e) = panel.env(t) else { continue };
            let start = xs.len();
            for s in &slots {
                match panel.lagged(&s.series, t, s.lag) {
                    Some(v) => xs.push(v),
                    None => {
                        xs.truncate(start);
                        continue 'rows;
                    }
                }
            }
            ts.push(t);
            ys.push(y);
            env.extend_from_slice(e);
        }
        if ts.is_empty() {
            return Err(Error::NoUsableRows(target.to_string()));
        }
        Ok(Self {
            target: target.clone(),
            lags,
            x: DMatrix::from_row_slice(ts.len(), slots.len(), &xs),
            y: DVector::from_vec(ys),
            timestamps: ts,
            slots,
            env,
            env_dim: panel.env_dim(),
        })
    }

    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    pub fn env_row(&self, i: usize) -> &[f64] {
        &self.env[i * self.env_dim..(i + 1) * self.env_dim]
    }

    pub fn env_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows(), self.env_dim, &self.env)
    }

    pub fn slot_index(&self, series: &SeriesKey, lag: usize) -> Option<usize> {
        self.slots.iter().position(|s| &s.series == series && s.lag == lag)
    }

    /// Columns of all lags of one series.
    pub fn series_columns(&self, series: &SeriesKey) -> Option<Vec<usize>> {
        (1..=self.lags).map(|l| self.slot_index(series, l)).collect()
    }

    /// Design columns of `parents`, in their slot order.
    pub fn parent_columns(&self, parents: &ParentSpec) -> Result<Vec<usize>> {
        parents
            .slots()
            .iter()
            .map(|s| {
                self.slot_index(&s.series, s.lag)
                    .ok_or_else(|| Error::InvalidParameter(format!("design lacks {}@lag{}", s.series, s.lag)))
            })
            .collect()
    }

    pub fn row_values(&self, i: usize, cols: &[usize]) -> Vec<f64> {
        cols.iter().map(|&c| self.x[(i, c)]).collect()
    }
}

/// Design rows holding exactly the slots of `parents` at the window timestamps.
pub fn build_design_rows(panel: &Panel, parents: &ParentSpec, windows: &[Minutes]) -> Result<Design> {
    let series: Vec<SeriesKey> = parents.series().cloned().collect();
    Design::build(panel, &parents.target, &series, parents.lags, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Category, POLLUTANTS};

    fn synthetic_panel(sensors: &[&str], hours: usize) -> Panel {
        let mut map = BTreeMap::new();
        for (si, s) in sensors.iter().enumerate() {
            for c in 0..POLLUTANTS.len() as u8 {
                let v: Vec<f64> = (0..hours).map(|h| ((h * 7 + si * 3 + c as usize) % 11) as f64).collect();
                map.insert(SeriesKey::new(Category(c), *s), v);
            }
        }
        Panel::from_model_space(0, map, None).unwrap()
    }

    #[test]
    fn local_block_sizing() {
        let panel = synthetic_panel(&["s0", "s1"], 50);
        let target = SeriesKey::new(Category(0), "s0");
        let spec = ParentSpec::local_only(target.clone(), panel.sensor_series("s0"), 2);
        let d = build_design_rows(&panel, &spec, &panel.timestamps()).unwrap();
        assert_eq!(d.x.ncols(), 12);
        // the first two hours lack lags
        assert_eq!(d.rows(), 48);
        assert_eq!(d.timestamps[0], 120);

        let spec = ParentSpec::local_only(target, panel.sensor_series("s0"), 1)
            .with_neighbors(vec![SeriesKey::new(Category(2), "s1")])
            .unwrap();
        let d = build_design_rows(&panel, &spec, &[0, 60, 600]).unwrap();
        assert_eq!(d.x.ncols(), 7);
        assert_eq!(d.timestamps, vec![60, 600]);
        assert_eq!(d.x[(1, 6)], panel.value(&SeriesKey::new(Category(2), "s1"), 540).unwrap());
    }

    #[test]
    fn no_rows() {
        let panel = synthetic_panel(&["s0"], 5);
        let spec = ParentSpec::local_only(SeriesKey::new(Category(0), "s0"), panel.sensor_series("s0"), 3);
        assert!(matches!(build_design_rows(&panel, &spec, &[0, 60, 120]), Err(Error::NoUsableRows(_))));
    }

    #[test]
    fn neighbor_validation() {
        let spec = ParentSpec::local_only(SeriesKey::new(Category(0), "s0"), vec![], 1);
        assert!(spec.with_neighbors(vec![SeriesKey::new(Category(1), "s0")]).is_err());
        assert!(spec
            .with_neighbors(vec![SeriesKey::new(Category(1), "s1"), SeriesKey::new(Category(2), "s1")])
            .is_err());
    }

    #[test]
    fn measured_panel_keeps_levels_and_env() {
        let s = PollutantSeries {
            sensor_id: "a".into(),
            category: Category(0),
            timestamps: (0..6).map(|h| h * 60).collect(),
            values: vec![Some(1.0), Some(3.0), Some(2.0), None, Some(4.0), Some(8.0)],
        };
        let meteo = MeteoSeries {
            timestamps: vec![60, 120, 180],
            vectors: vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]],
        };
        let p = Panel::from_pollutants(&[s], Some(&meteo)).unwrap();
        let key = SeriesKey::new(Category(0), "a");
        assert_eq!(p.len(), 6);
        assert_eq!(p.level(&key, 120), Some(2.0));
        assert_eq!(p.value(&key, 180), None);
        assert_eq!(p.value(&key, 0), None);
        let (m, sd) = p.scale(&key).unwrap();
        assert!((p.value(&key, 60).unwrap() * sd + m - 2.0).abs() < 1e-12);
        let e = p.env(60).unwrap();
        assert!((e[0] + 1.224744871391589).abs() < 1e-12 && e[1] == 0.0);
        assert_eq!(p.env(0), None);
    }
}
