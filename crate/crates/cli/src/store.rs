//! On-disk artifacts. Every write goes to a temporary sibling first and is
//! renamed into place, so readers never see a partial file.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stcausal::data::{MeteoSeries, PollutantSeries, SensorMeta, SeriesKey};

use crate::error::{CliError, CliResult};

pub const DATASET: &str = "dataset.json";
pub const PATTERNS: &str = "patterns";
pub const CANDIDATES: &str = "candidates";
pub const MODELS: &str = "models";

/// Ingested inputs, as consumed by every later stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: Vec<SensorMeta>,
    pub series: Vec<PollutantSeries>,
    pub meteo: Option<MeteoSeries>,
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(CliError::MissingArtifact(path.to_path_buf())),
        Err(e) => return Err(CliError::io(path, e)),
    };
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn key_file(dir: &Path, key: &SeriesKey) -> PathBuf {
    dir.join(format!("{key}.json"))
}

/// JSON files of an artifact directory, sorted by name.
pub fn json_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(CliError::MissingArtifact(dir.to_path_buf())),
        Err(e) => return Err(CliError::io(dir, e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Empties an artifact directory of JSON files so a rerun leaves no stale
/// entries behind.
pub fn reset_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() {
        for p in json_files(dir)? {
            std::fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.json");
        write_json(&p, &vec![1, 2]).unwrap();
        write_json(&p, &vec![3]).unwrap();
        assert_eq!(read_json::<Vec<i32>>(&p).unwrap(), vec![3]);
        assert_eq!(json_files(&dir.path().join("sub")).unwrap(), vec![p.clone()]);
        assert!(matches!(
            read_json::<Vec<i32>>(&dir.path().join("b.json")),
            Err(CliError::MissingArtifact(_))
        ));
    }
}
