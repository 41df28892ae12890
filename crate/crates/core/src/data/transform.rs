use serde::{Deserialize, Serialize};

use super::time::{Minutes, MINUTES_PER_HOUR};
use super::PollutantSeries;
use crate::error::{Error, Result};

/// Below this standard deviation a series is treated as flat.
pub(crate) const DEGENERATE_STD: f64 = 1e-12;

/// z-normalized one-hour differences. `mean` and `std` are the statistics of
/// the raw differences, kept so estimates can be mapped back to
/// concentration units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSeries {
    pub timestamps: Vec<Minutes>,
    pub values: Vec<Option<f64>>,
    pub mean: f64,
    pub std: f64,
}

impl DiffSeries {
    /// Maps a normalized difference back to a raw one-hour change.
    pub fn denormalize(&self, z: f64) -> f64 {
        self.mean + z * self.std
    }
}

/// Population mean and standard deviation of the present values.
pub(crate) fn mean_std<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

pub fn diff_normalize(series: &PollutantSeries) -> Result<DiffSeries> {
    if series.len() < 2 {
        return Err(Error::DegenerateSeries(format!("{} has fewer than 2 readings", series.key())));
    }
    let mut timestamps = Vec::with_capacity(series.len() - 1);
    let mut raw = Vec::with_capacity(series.len() - 1);
    for i in 1..series.len() {
        let consecutive = series.timestamps[i] - series.timestamps[i - 1] == MINUTES_PER_HOUR;
        let d = match (consecutive, series.values[i], series.values[i - 1]) {
            (true, Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        timestamps.push(series.timestamps[i]);
        raw.push(d);
    }
    let (mean, std, n) = mean_std(raw.iter().flatten());
    if n < 2 {
        return Err(Error::DegenerateSeries(format!(
            "{} has fewer than 2 consecutive-hour pairs",
            series.key()
        )));
    }
    let values = raw
        .into_iter()
        .map(|d| d.map(|d| if std < DEGENERATE_STD { 0.0 } else { (d - mean) / std }))
        .collect();
    Ok(DiffSeries {
        timestamps,
        values,
        mean,
        std,
    })
}
