//! Sensor data model, ingestion and the transformations that feed the miner
//! and the causal model.
//!
//! Timestamps are carried as [`Minutes`] since the Unix epoch, read as naive
//! local time. Hourly data therefore sits on multiples of 60.

mod geo;
mod ingest;
mod normality;
mod sax;
mod season;
mod time;
mod transform;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use geo::haversine_km;
pub use ingest::{
    ingest_air_quality, ingest_meteorology, read_sensor_metadata, write_air_quality, write_meteorology, write_sensor_metadata, GridSpec,
    StationReading,
};
pub use normality::{normality_check, NormalityResult};
pub use sax::{sax_breakpoints, sax_discretize, sax_level, SaxParams};
pub use season::{season_of, split_seasonal, Season, SeasonSplit};
pub use time::{format_timestamp, parse_timestamp, Minutes, MINUTES_PER_DAY, MINUTES_PER_HOUR};
pub use transform::{diff_normalize, DiffSeries};

/// Pollutant columns of the air-quality CSV, in category-index order.
pub const POLLUTANTS: [&str; 6] = ["PM25", "PM10", "NO2", "CO", "O3", "SO2"];

/// Meteorology measurements per station / grid cell.
pub const METEO_FIELDS: [&str; 5] = ["T", "P", "H", "WS", "WD"];

/// Zero-based pollutant category index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Category(pub u8);

impl Category {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match POLLUTANTS.get(self.index()) {
            Some(name) => f.write_str(name),
            None => write!(f, "C{}", self.0),
        }
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(i) = POLLUTANTS.iter().position(|p| p.eq_ignore_ascii_case(s)) {
            return Ok(Category(i as u8));
        }
        s.strip_prefix('C')
            .and_then(|n| n.parse::<u8>().ok())
            .map(Category)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pollutant category `{s}`")))
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A (pollutant, sensor) pair: one variable of the causal system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub category: Category,
    pub sensor: String,
}

impl SeriesKey {
    pub fn new(category: Category, sensor: impl Into<String>) -> Self {
        Self {
            category,
            sensor: sensor.into(),
        }
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.category, self.sensor)
    }
}

impl FromStr for SeriesKey {
    type Err = Error;

    /// Parses the `CATEGORY@sensor` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let (cat, sensor) = s
            .split_once('@')
            .filter(|(_, sensor)| !sensor.is_empty())
            .ok_or_else(|| Error::InvalidParameter(format!("series key `{s}` is not CATEGORY@sensor")))?;
        Ok(SeriesKey::new(cat.parse()?, sensor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub sensor_id: String,
    pub city_id: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl SensorMeta {
    pub fn new(sensor_id: impl Into<String>, city_id: impl Into<String>, lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidParameter(format!("coordinates ({lat}, {lon}) out of range")));
        }
        Ok(Self {
            sensor_id: sensor_id.into(),
            city_id: city_id.into(),
            latitude: lat,
            longitude: lon,
        })
    }

    pub fn position(&self) -> (f64, f64) {
        (self.latitude, self.longitude)
    }
}

/// Hourly concentration readings of one pollutant at one sensor.
/// `None` marks a missing reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutantSeries {
    pub sensor_id: String,
    pub category: Category,
    pub timestamps: Vec<Minutes>,
    pub values: Vec<Option<f64>>,
}

impl PollutantSeries {
    pub fn key(&self) -> SeriesKey {
        SeriesKey::new(self.category, self.sensor_id.clone())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Value at an exact timestamp, if present and not missing.
    pub fn value_at(&self, t: Minutes) -> Option<f64> {
        self.timestamps.binary_search(&t).ok().and_then(|i| self.values[i])
    }
}

/// Per-timestamp environmental vectors (five measurements per grid cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeteoSeries {
    pub timestamps: Vec<Minutes>,
    pub vectors: Vec<Vec<f64>>,
}

impl MeteoSeries {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn vector_at(&self, t: Minutes) -> Option<&[f64]> {
        self.timestamps.binary_search(&t).ok().map(|i| self.vectors[i].as_slice())
    }
}

/// One discretized reading inside a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolEvent {
    /// Level in `1..=alphabet`.
    pub level: u8,
    /// Minutes since the start of the day.
    pub offset: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailySequence {
    /// Day number since the epoch; the day starts at `day * MINUTES_PER_DAY`.
    pub day: i64,
    pub events: Vec<SymbolEvent>,
}

impl DailySequence {
    pub fn start(&self) -> Minutes {
        self.day * MINUTES_PER_DAY
    }
}

/// Collection of daily symbol sequences for one (pollutant, sensor).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicDatabase {
    pub key: SeriesKey,
    pub alphabet: u8,
    pub days: Vec<DailySequence>,
}

impl SymbolicDatabase {
    /// Builds a database from `(level, offset)` lists, one per day, checking
    /// that offsets increase strictly and levels lie in `1..=alphabet`.
    pub fn from_days(key: SeriesKey, alphabet: u8, days: Vec<Vec<(u8, u32)>>) -> Result<Self> {
        let mut out = Vec::with_capacity(days.len());
        for (d, events) in days.into_iter().enumerate() {
            for w in events.windows(2) {
                if w[1].1 <= w[0].1 {
                    return Err(Error::InvalidParameter(format!("day {d}: offsets must be strictly increasing")));
                }
            }
            if let Some(&(l, _)) = events.iter().find(|(l, _)| *l == 0 || *l > alphabet) {
                return Err(Error::InvalidParameter(format!("day {d}: level {l} outside 1..={alphabet}")));
            }
            out.push(DailySequence {
                day: d as i64,
                events: events.into_iter().map(|(level, offset)| SymbolEvent { level, offset }).collect(),
            });
        }
        Ok(Self { key, alphabet, days: out })
    }
}
