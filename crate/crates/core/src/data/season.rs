use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::time::{Minutes, MINUTES_PER_DAY, MINUTES_PER_HOUR};
use crate::error::{Error, Result};

/// Meteorological seasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Spring,
    Summer,
    Autumn,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Spring, Season::Summer, Season::Autumn, Season::Winter];

    pub fn from_month(month: u32) -> Season {
        match month {
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            9..=11 => Season::Autumn,
            _ => Season::Winter,
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
            Season::Winter => "winter",
        })
    }
}

impl std::str::FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Season::ALL
            .into_iter()
            .find(|x| x.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown season `{s}`")))
    }
}

fn date_of(t: Minutes) -> NaiveDate {
    NaiveDate::default() + chrono::Days::new(t.div_euclid(MINUTES_PER_DAY) as u64)
}

/// Season and season-year of a timestamp. December counts towards the
/// following year's winter.
pub fn season_of(t: Minutes) -> (Season, i32) {
    let d = date_of(t);
    let season = Season::from_month(d.month());
    let year = if d.month() == 12 { d.year() + 1 } else { d.year() };
    (season, year)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonSplit {
    pub season: Season,
    pub train: Vec<Minutes>,
    pub test: Vec<Minutes>,
}

impl SeasonSplit {
    pub fn train_days(&self) -> usize {
        distinct_days(&self.train)
    }

    pub fn test_days(&self) -> usize {
        distinct_days(&self.test)
    }
}

fn distinct_days(ts: &[Minutes]) -> usize {
    ts.iter().map(|t| t.div_euclid(MINUTES_PER_DAY)).collect::<BTreeSet<_>>().len()
}

/// Splits timestamps per season: the last `test_days` calendar days of every
/// season-year go to test, the rest to train. Training timestamps within
/// `guard_hours` after the end of any test window are dropped so that their
/// lag windows cannot reach into test data.
pub fn split_seasonal(timestamps: &[Minutes], test_days: usize, guard_hours: i64) -> Result<Vec<SeasonSplit>> {
    let mut groups: BTreeMap<(Season, i32), BTreeSet<i64>> = BTreeMap::new();
    for &t in timestamps {
        groups.entry(season_of(t)).or_default().insert(t.div_euclid(MINUTES_PER_DAY));
    }
    let mut test_day_set: BTreeSet<i64> = BTreeSet::new();
    for (&(season, year), days) in &groups {
        if days.len() < 2 * test_days {
            return Err(Error::InsufficientData {
                season: format!("{season} {year}"),
                days: days.len(),
                test_days,
            });
        }
        test_day_set.extend(days.iter().rev().take(test_days).copied());
    }
    // end (exclusive) of each maximal run of test days
    let window_ends: Vec<Minutes> = test_day_set
        .iter()
        .filter(|d| !test_day_set.contains(&(**d + 1)))
        .map(|d| (d + 1) * MINUTES_PER_DAY)
        .collect();
    let guard = guard_hours * MINUTES_PER_HOUR;
    let leaks = |t: Minutes| window_ends.iter().any(|&end| t >= end && t < end + guard);

    let mut out: BTreeMap<Season, SeasonSplit> = BTreeMap::new();
    let mut sorted = timestamps.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for t in sorted {
        let (season, _) = season_of(t);
        let split = out.entry(season).or_insert_with(|| SeasonSplit {
            season,
            train: Vec::new(),
            test: Vec::new(),
        });
        if test_day_set.contains(&t.div_euclid(MINUTES_PER_DAY)) {
            split.test.push(t);
        } else if !leaks(t) {
            split.train.push(t);
        }
    }
    Ok(out.into_values().collect())
}
