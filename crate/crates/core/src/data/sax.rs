use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::time::MINUTES_PER_DAY;
use super::transform::{mean_std, DEGENERATE_STD};
use super::{DailySequence, PollutantSeries, SymbolEvent, SymbolicDatabase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaxParams {
    /// Number of levels, 2..=10.
    pub alphabet: u8,
    /// Aggregation window in minutes; 60 keeps hourly readings as they are.
    pub segment_minutes: u32,
}

impl Default for SaxParams {
    fn default() -> Self {
        Self {
            alphabet: 5,
            segment_minutes: 60,
        }
    }
}

/// Equiprobable standard-normal breakpoints `Φ⁻¹(j/a)` for `j = 1..a`.
pub fn sax_breakpoints(alphabet: u8) -> Vec<f64> {
    let n = Normal::standard();
    (1..alphabet).map(|j| n.inverse_cdf(j as f64 / alphabet as f64)).collect()
}

/// Level in `1..=breakpoints.len() + 1` for a z-value.
pub fn sax_level(z: f64, breakpoints: &[f64]) -> u8 {
    breakpoints.partition_point(|&b| b < z) as u8 + 1
}

/// Discretizes a series into one symbol sequence per calendar day. Readings are
/// z-normalized over the whole series, then averaged per segment.
pub fn sax_discretize(series: &PollutantSeries, params: SaxParams) -> Result<SymbolicDatabase> {
    if !(2..=10).contains(&params.alphabet) {
        return Err(Error::InvalidParameter(format!("alphabet {} outside 2..=10", params.alphabet)));
    }
    if params.segment_minutes == 0 || MINUTES_PER_DAY % params.segment_minutes as i64 != 0 {
        return Err(Error::InvalidParameter(format!(
            "segment of {} minutes does not divide a day",
            params.segment_minutes
        )));
    }
    let present: Vec<f64> = series.values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::DegenerateSeries(format!("{} has no readings", series.key())));
    }
    let (mean, std, _) = mean_std(present.iter());
    let flat = std < DEGENERATE_STD;
    if flat {
        log::warn!("{}: zero variance, all readings map to the median level", series.key());
    }
    // ⌈(a + 1) / 2⌉
    let median = (params.alphabet + 2) / 2;
    let breakpoints = sax_breakpoints(params.alphabet);

    let seg = params.segment_minutes as i64;
    // (day, segment index) -> (sum of z, count)
    let mut buckets: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    for (&t, v) in series.timestamps.iter().zip(&series.values) {
        let Some(v) = v else { continue };
        let z = if flat { 0.0 } else { (v - mean) / std };
        let day = t.div_euclid(MINUTES_PER_DAY);
        let slot = t.rem_euclid(MINUTES_PER_DAY) / seg;
        let b = buckets.entry((day, slot)).or_insert((0.0, 0));
        b.0 += z;
        b.1 += 1;
    }

    let mut days: Vec<DailySequence> = Vec::new();
    for ((day, slot), (sum, count)) in buckets {
        let level = if flat { median } else { sax_level(sum / count as f64, &breakpoints) };
        let ev = SymbolEvent {
            level,
            offset: (slot * seg) as u32,
        };
        match days.last_mut() {
            Some(d) if d.day == day => d.events.push(ev),
            _ => days.push(DailySequence { day, events: vec![ev] }),
        }
    }
    Ok(SymbolicDatabase {
        key: series.key(),
        alphabet: params.alphabet,
        days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Category;
    use proptest::prelude::*;

    /// Independent quantile route: Simpson-integrated Gaussian density
    /// inverted by bisection.
    fn quantile_oracle(p: f64) -> f64 {
        let cdf = |x: f64| {
            let (a, n) = (-12.0, 20_000);
            let h = (x - a) / n as f64;
            let f = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let mut s = f(a) + f(x);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn series(values: &[f64]) -> PollutantSeries {
        PollutantSeries {
            sensor_id: "s".into(),
            category: Category(0),
            timestamps: (0..values.len() as i64).map(|i| i * 60).collect(),
            values: values.iter().copied().map(Some).collect(),
        }
    }

    #[test]
    fn breakpoints_match_oracle() {
        let b = sax_breakpoints(3);
        let oracle = [quantile_oracle(1.0 / 3.0), quantile_oracle(2.0 / 3.0)];
        assert!((oracle[0] + 0.4307).abs() < 1e-4 && (oracle[1] - 0.4307).abs() < 1e-4);
        for (x, o) in b.iter().zip(oracle) {
            assert!((x - o).abs() < 1e-8, "{x} vs {o}");
        }
        for a in 2..=10u8 {
            let b = sax_breakpoints(a);
            for (j, x) in b.iter().enumerate() {
                assert!((x - quantile_oracle((j + 1) as f64 / a as f64)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn direct_levels() {
        let b = sax_breakpoints(3);
        assert_eq!([-1.0, 0.0, 1.0].map(|z| sax_level(z, &b)), [1, 2, 3]);
    }

    #[test]
    fn constant_series_maps_to_median() {
        let db = sax_discretize(
            &series(&[4.0; 30]),
            SaxParams {
                alphabet: 3,
                segment_minutes: 60,
            },
        )
        .unwrap();
        assert!(db.days.iter().flat_map(|d| &d.events).all(|e| e.level == 2));
        let db = sax_discretize(
            &series(&[4.0; 30]),
            SaxParams {
                alphabet: 5,
                segment_minutes: 60,
            },
        )
        .unwrap();
        assert!(db.days.iter().flat_map(|d| &d.events).all(|e| e.level == 3));
    }

    #[test]
    fn partitions_by_day() {
        let values: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let db = sax_discretize(&series(&values), SaxParams::default()).unwrap();
        assert_eq!(db.days.len(), 3);
        assert_eq!(db.days[0].events.len(), 24);
        assert_eq!(db.days[2].events.len(), 2);
        assert_eq!(db.days[1].events[5].offset, 300);
    }

    #[test]
    fn segments_aggregate() {
        let values: Vec<f64> = (0..48).map(|i| i as f64).collect();
        let db = sax_discretize(
            &series(&values),
            SaxParams {
                alphabet: 4,
                segment_minutes: 240,
            },
        )
        .unwrap();
        assert_eq!(db.days[0].events.len(), 6);
        assert_eq!(db.days[0].events[1].offset, 240);
    }

    #[test]
    fn rejects_bad_alphabet() {
        assert!(sax_discretize(
            &series(&[1.0, 2.0]),
            SaxParams {
                alphabet: 11,
                segment_minutes: 60
            }
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_value(values in prop::collection::vec(-50.0..50.0f64, 2..100), a in 2u8..=10) {
            let db = sax_discretize(&series(&values), SaxParams { alphabet: a, segment_minutes: 60 }).unwrap();
            let levels: Vec<u8> = db.days.iter().flat_map(|d| d.events.iter().map(|e| e.level)).collect();
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] < values[j] {
                        prop_assert!(levels[i] <= levels[j]);
                    }
                }
                prop_assert!((1..=a).contains(&levels[i]));
            }
        }
    }
}
