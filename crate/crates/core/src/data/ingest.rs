use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::time::{format_timestamp, parse_timestamp, Minutes};
use super::{Category, MeteoSeries, PollutantSeries, SensorMeta, METEO_FIELDS, POLLUTANTS};
use crate::error::{Error, Result};

const AQ_HEADER: [&str; 8] = ["sensor_id", "timestamp", "PM25", "PM10", "NO2", "CO", "O3", "SO2"];
const METEO_HEADER: [&str; 9] = ["station_id", "lat", "lon", "timestamp", "T", "P", "H", "WS", "WD"];
const META_HEADER: [&str; 4] = ["sensor_id", "city_id", "lat", "lon"];

/// Region bounding box split into `rows × cols` cells. Row 0 is the
/// southernmost band, column 0 the westernmost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    fn cell_of(&self, lat: f64, lon: f64) -> Option<usize> {
        if !(self.lat_min..=self.lat_max).contains(&lat) || !(self.lon_min..=self.lon_max).contains(&lon) {
            return None;
        }
        let band = |v: f64, lo: f64, hi: f64, n: usize| {
            let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            ((frac * n as f64) as usize).min(n - 1)
        };
        let r = band(lat, self.lat_min, self.lat_max, self.rows);
        let c = band(lon, self.lon_min, self.lon_max, self.cols);
        Some(r * self.cols + c)
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn malformed(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| malformed(path, 1, e.to_string()))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(malformed(
            path,
            1,
            format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn parse_f64(path: &Path, line: u64, field: &str, name: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| malformed(path, line, format!("{name}: `{field}` is not a number")))
}

fn parse_optional(path: &Path, line: u64, field: &str, name: &str) -> Result<Option<f64>> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") {
        Ok(None)
    } else {
        parse_f64(path, line, f, name).map(Some)
    }
}

pub fn read_sensor_metadata(path: impl AsRef<Path>) -> Result<Vec<SensorMeta>> {
    let path = path.as_ref();
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &META_HEADER)?;
    let mut out: Vec<SensorMeta> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| malformed(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != META_HEADER.len() {
            return Err(malformed(path, line, "wrong field count"));
        }
        let lat = parse_f64(path, line, &rec[2], "lat")?;
        let lon = parse_f64(path, line, &rec[3], "lon")?;
        let meta = SensorMeta::new(rec[0].trim(), rec[1].trim(), lat, lon).map_err(|e| malformed(path, line, e.to_string()))?;
        if out.iter().any(|m| m.sensor_id == meta.sensor_id) {
            return Err(malformed(path, line, format!("sensor `{}` listed twice", meta.sensor_id)));
        }
        out.push(meta);
    }
    Ok(out)
}

pub fn write_sensor_metadata(path: impl AsRef<Path>, meta: &[SensorMeta]) -> Result<()> {
    let mut out = String::from("sensor_id,city_id,lat,lon\n");
    for m in meta {
        out.push_str(&format!("{},{},{},{}\n", m.sensor_id, m.city_id, m.latitude, m.longitude));
    }
    write_all(path.as_ref(), &out)
}

/// Reads the air-quality CSV into one series per (sensor, pollutant), sorted
/// by sensor then category. Rows may arrive in any order.
pub fn ingest_air_quality(path: impl AsRef<Path>, metadata: &[SensorMeta]) -> Result<Vec<PollutantSeries>> {
    let path = path.as_ref();
    let known: HashMap<&str, ()> = metadata.iter().map(|m| (m.sensor_id.as_str(), ())).collect();
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &AQ_HEADER)?;

    let mut rows: BTreeMap<String, BTreeMap<Minutes, [Option<f64>; 6]>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| malformed(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != AQ_HEADER.len() {
            return Err(malformed(path, line, "wrong field count"));
        }
        let sensor = rec[0].trim();
        if !known.contains_key(sensor) {
            return Err(Error::UnknownSensor(sensor.to_string()));
        }
        let t = parse_timestamp(&rec[1]).map_err(|e| malformed(path, line, e.to_string()))?;
        let mut vals = [None; 6];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = parse_optional(path, line, &rec[i + 2], POLLUTANTS[i])?;
        }
        let per_sensor = rows.entry(sensor.to_string()).or_default();
        if per_sensor.insert(t, vals).is_some() {
            return Err(Error::DuplicateTimestamp {
                sensor: sensor.to_string(),
                timestamp: format_timestamp(t),
            });
        }
    }

    let mut out = Vec::with_capacity(rows.len() * POLLUTANTS.len());
    for (sensor, by_time) in rows {
        let timestamps: Vec<Minutes> = by_time.keys().copied().collect();
        for c in 0..POLLUTANTS.len() {
            out.push(PollutantSeries {
                sensor_id: sensor.clone(),
                category: Category(c as u8),
                timestamps: timestamps.clone(),
                values: by_time.values().map(|v| v[c]).collect(),
            });
        }
    }
    Ok(out)
}

/// Writes series back in the air-quality CSV layout. Categories absent for a
/// sensor are written as missing.
pub fn write_air_quality(path: impl AsRef<Path>, series: &[PollutantSeries]) -> Result<()> {
    let mut grid: BTreeMap<&str, BTreeMap<Minutes, [Option<f64>; 6]>> = BTreeMap::new();
    for s in series {
        let c = s.category.index();
        if c >= POLLUTANTS.len() {
            return Err(Error::InvalidParameter(format!("category {} has no CSV column", s.category)));
        }
        let per_sensor = grid.entry(s.sensor_id.as_str()).or_default();
        for (&t, &v) in s.timestamps.iter().zip(&s.values) {
            per_sensor.entry(t).or_insert([None; 6])[c] = v;
        }
    }
    let mut out = AQ_HEADER.join(",");
    out.push('\n');
    for (sensor, by_time) in grid {
        for (t, vals) in by_time {
            out.push_str(sensor);
            out.push(',');
            out.push_str(&format_timestamp(t));
            for v in vals {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
    }
    write_all(path.as_ref(), &out)
}

/// Reads station meteorology and averages it onto the grid. Stations outside
/// the bounding box are ignored; cells without a station take the region-wide
/// mean at that timestamp. Timestamps with no in-region station are dropped.
pub fn ingest_meteorology(path: impl AsRef<Path>, grid: &GridSpec) -> Result<MeteoSeries> {
    let path = path.as_ref();
    if grid.rows == 0 || grid.cols == 0 {
        return Err(Error::InvalidParameter("grid needs at least 1×1 cells".into()));
    }
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &METEO_HEADER)?;

    let nf = METEO_FIELDS.len();
    let cells = grid.cells();
    // per timestamp: (cell sums, cell counts)
    let mut acc: BTreeMap<Minutes, (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| malformed(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != METEO_HEADER.len() {
            return Err(malformed(path, line, "wrong field count"));
        }
        let lat = parse_f64(path, line, &rec[1], "lat")?;
        let lon = parse_f64(path, line, &rec[2], "lon")?;
        let t = parse_timestamp(&rec[3]).map_err(|e| malformed(path, line, e.to_string()))?;
        let mut vals = [0.0; 5];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = parse_f64(path, line, &rec[4 + i], METEO_FIELDS[i])?;
        }
        let Some(cell) = grid.cell_of(lat, lon) else { continue };
        let (sums, counts) = acc.entry(t).or_insert_with(|| (vec![0.0; cells * nf], vec![0; cells]));
        for (i, v) in vals.iter().enumerate() {
            sums[cell * nf + i] += v;
        }
        counts[cell] += 1;
    }
    if acc.is_empty() {
        return Err(Error::EmptyRegion);
    }

    let mut timestamps = Vec::with_capacity(acc.len());
    let mut vectors = Vec::with_capacity(acc.len());
    for (t, (sums, counts)) in acc {
        let total: usize = counts.iter().sum();
        let mut region = [0.0; 5];
        for c in 0..cells {
            for i in 0..nf {
                region[i] += sums[c * nf + i];
            }
        }
        region.iter_mut().for_each(|v| *v /= total as f64);
        let mut vector = vec![0.0; cells * nf];
        for c in 0..cells {
            for i in 0..nf {
                vector[c * nf + i] = if counts[c] > 0 { sums[c * nf + i] / counts[c] as f64 } else { region[i] };
            }
        }
        timestamps.push(t);
        vectors.push(vector);
    }
    Ok(MeteoSeries { timestamps, vectors })
}

/// One station reading: `(station_id, lat, lon, timestamp, [T, P, H, WS, WD])`.
pub type StationReading = (String, f64, f64, Minutes, [f64; 5]);

pub fn write_meteorology(path: impl AsRef<Path>, readings: &[StationReading]) -> Result<()> {
    let mut out = METEO_HEADER.join(",");
    out.push('\n');
    for (id, lat, lon, t, v) in readings {
        out.push_str(&format!(
            "{id},{lat},{lon},{},{},{},{},{},{}\n",
            format_timestamp(*t),
            v[0],
            v[1],
            v[2],
            v[3],
            v[4]
        ));
    }
    write_all(path.as_ref(), &out)
}

fn write_all(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}
