//! Flat `key = value` settings. A config file supplies the base values and
//! command-line flags override them.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use stcausal::data::{GridSpec, Season, SeriesKey};
use stcausal::gbn::{Assignment, ClusterRows, PriorUpdate};
use stcausal::pipeline::PipelineConfig;
use stcausal::synth::{RegimeDatasetSpec, SyntheticSpec};

use crate::error::{CliError, CliResult};

/// Every recognised key. Anything else is a usage error.
const KEYS: &[&str] = &[
    // inputs and outputs
    "aq",
    "meta",
    "meteo",
    "grid",
    "out",
    // symbolization and mining
    "alphabet",
    "segment",
    "sigma",
    "delta_t",
    // candidate selection
    "max_distance_km",
    "min_corr",
    "lag",
    "top_x",
    "corr_formula",
    // causal model
    "lags",
    "clusters",
    "neighbors",
    "em_iterations",
    "prior_update",
    "assignment",
    "cluster_rows",
    "seed",
    "no_patterns",
    "no_confounders",
    // splitting and selection of work
    "season",
    "test_days",
    "targets",
    "hops",
    "sweep_k",
    "sweep_n",
    // synthetic data
    "n_series",
    "samples",
    "max_lag",
    "edge_density",
    "confounder",
    "noise_std",
    "seeds",
    "days",
    "noise_sensors",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            s.set(k.trim(), v.trim())
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        if !KEYS.contains(&key) {
            return Err(CliError::Usage(format!("unknown setting `{key}`")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override `{pair}` is not KEY=VALUE")))?;
        self.set(k.trim(), v.trim())
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Usage(format!("setting `{key}` = `{v}`: {e}"))))
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(raw) = self.values.get(key) else { return Ok(None) };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| CliError::Usage(format!("setting `{key}` item `{s}`: {e}"))))
            .collect::<CliResult<Vec<T>>>()
            .map(Some)
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> CliResult<Option<T>> {
        let Some(raw) = self.values.get(key) else { return Ok(None) };
        options.iter().find(|(name, _)| name == raw).map(|&(_, v)| Some(v)).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|o| o.0).collect();
            CliError::Usage(format!("setting `{key}` = `{raw}`: expected one of {}", names.join(", ")))
        })
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> CliResult<PathBuf> {
        self.path(key).ok_or_else(|| CliError::Usage(format!("setting `{key}` is required")))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.path("out").unwrap_or_else(|| PathBuf::from("out"))
    }

    /// `lat_min, lat_max, lon_min, lon_max, rows, cols`.
    pub fn grid(&self) -> CliResult<Option<GridSpec>> {
        let Some(v) = self.list::<f64>("grid")? else { return Ok(None) };
        let bad = || CliError::Usage("setting `grid` needs lat_min,lat_max,lon_min,lon_max,rows,cols with rows, cols ≥ 1".into());
        if v.len() != 6 || v[4] < 1.0 || v[5] < 1.0 || v[4].fract() != 0.0 || v[5].fract() != 0.0 || v[0] > v[1] || v[2] > v[3] {
            return Err(bad());
        }
        Ok(Some(GridSpec {
            lat_min: v[0],
            lat_max: v[1],
            lon_min: v[2],
            lon_max: v[3],
            rows: v[4] as usize,
            cols: v[5] as usize,
        }))
    }

    pub fn pipeline(&self) -> CliResult<PipelineConfig> {
        let mut c = PipelineConfig::default();
        c.sax.alphabet = self.get_or("alphabet", c.sax.alphabet)?;
        c.sax.segment_minutes = self.get_or("segment", c.sax.segment_minutes)?;
        c.sigma = self.get_or("sigma", c.sigma)?;
        c.delta_t = self.get_or("delta_t", c.delta_t)?;
        c.candidates.max_distance_km = self.get_or("max_distance_km", c.candidates.max_distance_km)?;
        c.candidates.min_corr = self.get_or("min_corr", c.candidates.min_corr)?;
        c.candidates.lag = self.get_or("lag", c.candidates.lag)?;
        c.candidates.top_x = self.get_or("top_x", c.candidates.top_x)?;
        c.candidates.formula = self.get_or("corr_formula", c.candidates.formula)?;
        c.lags = self.get_or("lags", c.lags)?;
        c.refine.em.clusters = self.get_or("clusters", c.refine.em.clusters)?;
        c.refine.neighbors = self.get_or("neighbors", c.refine.neighbors)?;
        c.refine.em.max_iter = self.get_or("em_iterations", c.refine.em.max_iter)?;
        c.refine.em.seed = self.get_or("seed", c.refine.em.seed)?;
        if let Some(v) = self.choice(
            "prior_update",
            &[("normalized", PriorUpdate::Normalized), ("as_printed", PriorUpdate::AsPrinted)],
        )? {
            c.refine.em.prior = v;
        }
        if let Some(v) = self.choice("assignment", &[("soft", Assignment::Soft), ("hard", Assignment::Hard)])? {
            c.refine.em.assignment = v;
        }
        if let Some(v) = self.choice("cluster_rows", &[("tagged", ClusterRows::Tagged), ("weighted", ClusterRows::Weighted)])? {
            c.refine.cluster_rows = v;
        }
        c.no_patterns = self.get_or("no_patterns", false)?;
        c.no_confounders = self.get_or("no_confounders", false)?;
        c.threads = worker_threads();

        let range = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Usage(format!("{what} out of range")))
            }
        };
        range((2..=10).contains(&c.sax.alphabet), "alphabet (2..=10)")?;
        range(
            c.sax.segment_minutes >= 60 && c.sax.segment_minutes % 60 == 0,
            "segment (positive multiple of 60)",
        )?;
        range(c.sigma > 0.0 && c.sigma <= 1.0, "sigma (0, 1]")?;
        range(c.delta_t > 0, "delta_t (> 0)")?;
        range(c.candidates.max_distance_km >= 0.0, "max_distance_km (≥ 0)")?;
        range((0.0..=1.0).contains(&c.candidates.min_corr), "min_corr [0, 1]")?;
        range(c.candidates.lag >= 0, "lag (≥ 0)")?;
        range(c.candidates.top_x >= 1, "top_x (≥ 1)")?;
        range(c.lags >= 1, "lags (≥ 1)")?;
        range(c.refine.em.clusters >= 1, "clusters (≥ 1)")?;
        range(c.refine.em.max_iter >= 1, "em_iterations (≥ 1)")?;
        Ok(c)
    }

    pub fn season(&self) -> CliResult<Option<Season>> {
        match self.values.get("season").map(String::as_str) {
            None | Some("all") => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|e: stcausal::Error| CliError::Usage(e.to_string())),
        }
    }

    pub fn test_days(&self) -> CliResult<usize> {
        self.get_or("test_days", 7)
    }

    pub fn targets(&self) -> CliResult<Option<Vec<SeriesKey>>> {
        self.list("targets")
    }

    pub fn hops(&self) -> CliResult<usize> {
        self.get_or("hops", 3)
    }

    /// `(K values, N values)` of a model-selection sweep, if requested.
    pub fn sweep(&self) -> CliResult<Option<(Vec<usize>, Vec<usize>)>> {
        let k = self.list::<usize>("sweep_k")?;
        let n = self.list::<usize>("sweep_n")?;
        if k.is_none() && n.is_none() {
            return Ok(None);
        }
        let c = self.pipeline()?;
        let k = k.unwrap_or_else(|| vec![c.refine.em.clusters]);
        let n = n.unwrap_or_else(|| vec![c.refine.neighbors]);
        if k.is_empty() || n.is_empty() || k.contains(&0) {
            return Err(CliError::Usage("sweep_k needs values ≥ 1 and sweep_n at least one value".into()));
        }
        Ok(Some((k, n)))
    }

    pub fn synthetic(&self) -> CliResult<SyntheticSpec> {
        let d = SyntheticSpec::default();
        Ok(SyntheticSpec {
            n_series: self.get_or("n_series", d.n_series)?,
            max_lag: self.get_or("max_lag", d.max_lag)?,
            edge_density: self.get_or("edge_density", d.edge_density)?,
            confounder: self.get_or("confounder", d.confounder)?,
            noise_std: self.get_or("noise_std", d.noise_std)?,
            samples: self.get_or("samples", d.samples)?,
            seed: self.get_or("seed", d.seed)?,
        })
    }

    pub fn seeds(&self) -> CliResult<u64> {
        let n = self.get_or("seeds", 1)?;
        if n == 0 {
            return Err(CliError::Usage("seeds must be ≥ 1".into()));
        }
        Ok(n)
    }

    pub fn regime(&self) -> CliResult<RegimeDatasetSpec> {
        let d = RegimeDatasetSpec::default();
        Ok(RegimeDatasetSpec {
            days: self.get_or("days", d.days)?,
            noise_sensors: self.get_or("noise_sensors", d.noise_sensors)?,
            seed: self.get_or("seed", d.seed)?,
            ..d
        })
    }
}

/// Worker count: `STCAUSAL_THREADS` when set, else the available cores.
pub fn worker_threads() -> usize {
    std::env::var("STCAUSAL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_overrides() {
        let mut s = Settings::parse("# header\n\nsigma = 0.2  # trailing\nclusters=2\n", "test").unwrap();
        s.set_pair("clusters=4").unwrap();
        let c = s.pipeline().unwrap();
        assert_eq!(c.sigma, 0.2);
        assert_eq!(c.refine.em.clusters, 4);
        assert_eq!(c.lags, 3);
    }

    #[test]
    fn fidelity_modes() {
        let s = Settings::parse(
            "prior_update = as_printed\nassignment = hard\ncluster_rows = weighted\ncorr_formula = unweighted",
            "t",
        )
        .unwrap();
        let c = s.pipeline().unwrap();
        assert_eq!(c.refine.em.prior, PriorUpdate::AsPrinted);
        assert_eq!(c.refine.em.assignment, Assignment::Hard);
        assert_eq!(c.refine.cluster_rows, ClusterRows::Weighted);
        assert_eq!(c.candidates.formula, stcausal::matcher::CorrFormula::Unweighted);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Settings::parse("colour = red", "t").is_err());
        assert!(Settings::parse("just text", "t").is_err());
        assert!(Settings::parse("sigma = 1.5", "t").unwrap().pipeline().is_err());
        assert!(Settings::parse("lags = x", "t").unwrap().pipeline().is_err());
        assert!(Settings::parse("grid = 1,2,3", "t").unwrap().grid().is_err());
        assert!(Settings::parse("assignment = fuzzy", "t").unwrap().pipeline().is_err());
    }

    #[test]
    fn grid_and_lists() {
        let s = Settings::parse("grid = 30, 32, 120, 122, 2, 3\ntargets = PM25@a, NO2@b\nsweep_k = 1,2", "t").unwrap();
        let g = s.grid().unwrap().unwrap();
        assert_eq!((g.rows, g.cols, g.lat_max), (2, 3, 32.0));
        assert_eq!(s.targets().unwrap().unwrap().len(), 2);
        let (k, n) = s.sweep().unwrap().unwrap();
        assert_eq!((k, n), (vec![1, 2], vec![3]));
    }
}
