//! Frequent evolving pattern mining.
//!
//! A PrefixSpan variant over daily symbol sequences with two changes: an item
//! may only extend a pattern if it follows the previous element within `Δt`
//! minutes and differs from it, and projection keeps a postfix for *every*
//! occurrence of the item rather than only the first. With first-occurrence
//! projection a later occurrence that satisfies the time constraint is lost.
//!
//! Support counts days, never occurrences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{format_timestamp, parse_timestamp, Minutes, SeriesKey, SymbolicDatabase};
use crate::error::{Error, Result};

/// Where a pattern occurs: the database day index and the absolute time of the
/// pattern's first element in the earliest embedding on that day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "(usize, String)", try_from = "(usize, String)")]
pub struct Occurrence {
    pub day: usize,
    pub start: Minutes,
}

impl From<Occurrence> for (usize, String) {
    fn from(o: Occurrence) -> Self {
        (o.day, format_timestamp(o.start))
    }
}

impl TryFrom<(usize, String)> for Occurrence {
    type Error = Error;

    fn try_from((day, ts): (usize, String)) -> Result<Self> {
        Ok(Occurrence {
            day,
            start: parse_timestamp(&ts)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolvingPattern {
    pub levels: Vec<u8>,
    pub support: usize,
    pub occurrences: Vec<Occurrence>,
}

/// All frequent evolving patterns of one database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSet {
    pub key: SeriesKey,
    pub sigma: f64,
    pub delta_t: u32,
    pub patterns: Vec<EvolvingPattern>,
}

impl PatternSet {
    /// Sorted, de-duplicated start times over every pattern.
    pub fn start_timestamps(&self) -> Vec<Minutes> {
        let mut ts: Vec<Minutes> = self.patterns.iter().flat_map(|p| p.occurrences.iter().map(|o| o.start)).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    pub fn get(&self, levels: &[u8]) -> Option<&EvolvingPattern> {
        self.patterns.iter().find(|p| p.levels == levels)
    }
}

/// Absolute day count for a fractional threshold, `⌈σ·days⌉` (at least 1).
pub fn support_threshold(sigma: f64, days: usize) -> usize {
    // the epsilon keeps 0.1 * 30 at 3 instead of 4
    ((sigma * days as f64 - 1e-9).ceil() as usize).max(1)
}

/// A postfix is identified by the last matched event of its day; the
/// residual sequence is everything after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Postfix {
    pub day: usize,
    /// Index of the last matched event within the day.
    pub pos: usize,
    /// Day offset of the pattern's first element for the earliest embedding
    /// ending at `pos`.
    pub start: u32,
}

#[derive(Debug, Clone)]
pub struct ProjectedDatabase<'a> {
    db: &'a SymbolicDatabase,
    pub prefix: Vec<u8>,
    pub postfixes: Vec<Postfix>,
}

impl<'a> ProjectedDatabase<'a> {
    pub fn len(&self) -> usize {
        self.postfixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postfixes.is_empty()
    }

    /// Residual of postfix `i` as `(level, minutes after the projection point)`.
    pub fn residual(&self, i: usize) -> impl Iterator<Item = (u8, u32)> + '_ {
        let p = self.postfixes[i];
        let events = &self.db.days[p.day].events;
        let anchor = events[p.pos].offset;
        events[p.pos + 1..].iter().map(move |e| (e.level, e.offset - anchor))
    }
}

/// Postfixes for every occurrence of `item`. Occurrences with nothing after
/// them are left out since they cannot grow.
pub fn initial_projection(db: &SymbolicDatabase, item: u8) -> ProjectedDatabase<'_> {
    let mut postfixes = Vec::new();
    for (d, day) in db.days.iter().enumerate() {
        for (pos, e) in day.events.iter().enumerate() {
            if e.level == item && pos + 1 < day.events.len() {
                postfixes.push(Postfix {
                    day: d,
                    pos,
                    start: e.offset,
                });
            }
        }
    }
    ProjectedDatabase {
        db,
        prefix: vec![item],
        postfixes,
    }
}

/// Classic PrefixSpan projection keeping only the first occurrence per day.
/// Kept to demonstrate the patterns it misses.
pub fn first_occurrence_projection(db: &SymbolicDatabase, item: u8) -> ProjectedDatabase<'_> {
    let mut postfixes = Vec::new();
    for (d, day) in db.days.iter().enumerate() {
        if let Some(pos) = day.events.iter().position(|e| e.level == item) {
            if pos + 1 < day.events.len() {
                postfixes.push(Postfix {
                    day: d,
                    pos,
                    start: day.events[pos].offset,
                });
            }
        }
    }
    ProjectedDatabase {
        db,
        prefix: vec![item],
        postfixes,
    }
}

/// Items other than `prev` that occur within `(0, Δt]` of the projection
/// point on at least `min_support` distinct days.
pub fn local_frequent_items(pdb: &ProjectedDatabase<'_>, min_support: usize, delta_t: u32, prev: Option<u8>) -> Vec<u8> {
    let alphabet = pdb.db.alphabet as usize;
    let mut count = vec![0usize; alphabet + 1];
    let mut last_day = vec![usize::MAX; alphabet + 1];
    for i in 0..pdb.postfixes.len() {
        let day = pdb.postfixes[i].day;
        for (level, rel) in pdb.residual(i) {
            if rel > delta_t {
                break;
            }
            let l = level as usize;
            if last_day[l] != day {
                last_day[l] = day;
                count[l] += 1;
            }
        }
    }
    (1..=alphabet as u8)
        .filter(|&l| Some(l) != prev && count[l as usize] >= min_support)
        .collect()
}

/// Projects on `item`, also returning the grown pattern's per-day earliest
/// occurrence (including embeddings that leave an empty residual).
fn extend<'a>(pdb: &ProjectedDatabase<'a>, item: u8, delta_t: u32) -> (ProjectedDatabase<'a>, Vec<Occurrence>) {
    let db = pdb.db;
    let mut grown: Vec<Postfix> = Vec::new();
    for p in &pdb.postfixes {
        let events = &db.days[p.day].events;
        let anchor = events[p.pos].offset;
        for (j, e) in events.iter().enumerate().skip(p.pos + 1) {
            if e.offset - anchor > delta_t {
                break;
            }
            if e.level == item {
                grown.push(Postfix {
                    day: p.day,
                    pos: j,
                    start: p.start,
                });
            }
        }
    }
    // several embeddings can end on the same event; keep the earliest start
    grown.sort_unstable_by_key(|p| (p.day, p.pos, p.start));
    grown.dedup_by_key(|p| (p.day, p.pos));

    let mut occurrences: Vec<Occurrence> = Vec::new();
    for p in &grown {
        let start = db.days[p.day].start() + p.start as Minutes;
        match occurrences.last_mut() {
            Some(o) if o.day == p.day => o.start = o.start.min(start),
            _ => occurrences.push(Occurrence { day: p.day, start }),
        }
    }
    grown.retain(|p| p.pos + 1 < db.days[p.day].events.len());

    let mut prefix = pdb.prefix.clone();
    prefix.push(item);
    (
        ProjectedDatabase {
            db,
            prefix,
            postfixes: grown,
        },
        occurrences,
    )
}

/// Full projection of `pdb` on `item` under the transition constraint.
pub fn full_project<'a>(pdb: &ProjectedDatabase<'a>, item: u8, delta_t: u32) -> ProjectedDatabase<'a> {
    extend(pdb, item, delta_t).0
}

fn check_params(db: &SymbolicDatabase, delta_t: u32) -> Result<()> {
    if db.days.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if delta_t == 0 {
        return Err(Error::InvalidParameter("Δt must be positive".into()));
    }
    Ok(())
}

/// Mines all evolving patterns of length ≥ 2 whose day support reaches
/// `⌈σ·|days|⌉`.
pub fn mine_feps(db: &SymbolicDatabase, sigma: f64, delta_t: u32) -> Result<PatternSet> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidParameter(format!("σ = {sigma} outside (0, 1]")));
    }
    check_params(db, delta_t)?;
    let mut set = mine_feps_abs(db, support_threshold(sigma, db.days.len()), delta_t)?;
    set.sigma = sigma;
    Ok(set)
}

/// As [`mine_feps`] with an absolute day-count threshold.
pub fn mine_feps_abs(db: &SymbolicDatabase, min_support: usize, delta_t: u32) -> Result<PatternSet> {
    check_params(db, delta_t)?;
    let min_support = min_support.max(1);
    let mut patterns = Vec::new();
    for item in frequent_items(db, min_support) {
        let pdb = initial_projection(db, item);
        grow(&pdb, item, min_support, delta_t, &mut patterns);
    }
    patterns.sort_by(|a: &EvolvingPattern, b| a.levels.cmp(&b.levels));
    Ok(PatternSet {
        key: db.key.clone(),
        sigma: min_support as f64 / db.days.len() as f64,
        delta_t,
        patterns,
    })
}

fn frequent_items(db: &SymbolicDatabase, min_support: usize) -> Vec<u8> {
    let mut days_with = vec![0usize; db.alphabet as usize + 1];
    for day in &db.days {
        let mut seen = vec![false; db.alphabet as usize + 1];
        for e in &day.events {
            seen[e.level as usize] = true;
        }
        for (l, s) in seen.iter().enumerate() {
            days_with[l] += usize::from(*s);
        }
    }
    (1..=db.alphabet).filter(|&l| days_with[l as usize] >= min_support).collect()
}

fn grow(pdb: &ProjectedDatabase<'_>, prev: u8, min_support: usize, delta_t: u32, out: &mut Vec<EvolvingPattern>) {
    for item in local_frequent_items(pdb, min_support, delta_t, Some(prev)) {
        let (next, occurrences) = extend(pdb, item, delta_t);
        out.push(EvolvingPattern {
            levels: next.prefix.clone(),
            support: occurrences.len(),
            occurrences,
        });
        if !next.is_empty() {
            grow(&next, item, min_support, delta_t, out);
        }
    }
}

const ORACLE_MAX_DAYS: usize = 10;
const ORACLE_MAX_DAY_LEN: usize = 12;
const ORACLE_MAX_ALPHABET: u8 = 4;

/// Exhaustive reference miner: enumerates every evolving sequence and counts
/// support by direct embedding search. Only for small instances.
pub fn brute_force_feps(db: &SymbolicDatabase, min_support: usize, delta_t: u32) -> Result<PatternSet> {
    check_params(db, delta_t)?;
    let longest = db.days.iter().map(|d| d.events.len()).max().unwrap_or(0);
    if db.days.len() > ORACLE_MAX_DAYS || longest > ORACLE_MAX_DAY_LEN || db.alphabet > ORACLE_MAX_ALPHABET {
        return Err(Error::InstanceTooLarge(format!(
            "{} days, longest day {longest}, alphabet {}",
            db.days.len(),
            db.alphabet
        )));
    }
    let min_support = min_support.max(1);
    let mut found: BTreeMap<Vec<u8>, EvolvingPattern> = BTreeMap::new();
    let mut stack: Vec<Vec<u8>> = (1..=db.alphabet).map(|l| vec![l]).collect();
    while let Some(seq) = stack.pop() {
        let occurrences: Vec<Occurrence> = db
            .days
            .iter()
            .enumerate()
            .filter_map(|(d, day)| {
                earliest_embedding(&day.events, &seq, delta_t).map(|start| Occurrence {
                    day: d,
                    start: day.start() + start as Minutes,
                })
            })
            .collect();
        // a sequence found on no day has no occurring extension either
        if occurrences.is_empty() {
            continue;
        }
        if seq.len() >= 2 && occurrences.len() >= min_support {
            found.insert(
                seq.clone(),
                EvolvingPattern {
                    levels: seq.clone(),
                    support: occurrences.len(),
                    occurrences,
                },
            );
        }
        if seq.len() < longest {
            let last = *seq.last().unwrap();
            for l in (1..=db.alphabet).filter(|&l| l != last) {
                let mut next = seq.clone();
                next.push(l);
                stack.push(next);
            }
        }
    }
    Ok(PatternSet {
        key: db.key.clone(),
        sigma: min_support as f64 / db.days.len() as f64,
        delta_t,
        patterns: found.into_values().collect(),
    })
}

/// Offset of the first element of the earliest embedding of `seq`, trying
/// start positions in time order.
fn earliest_embedding(events: &[crate::data::SymbolEvent], seq: &[u8], delta_t: u32) -> Option<u32> {
    fn rest(events: &[crate::data::SymbolEvent], at: usize, seq: &[u8], delta_t: u32) -> bool {
        if seq.is_empty() {
            return true;
        }
        (at + 1..events.len()).any(|j| {
            let gap = events[j].offset - events[at].offset;
            gap > 0 && gap <= delta_t && events[j].level == seq[0] && rest(events, j, &seq[1..], delta_t)
        })
    }
    (0..events.len())
        .find(|&i| events[i].level == seq[0] && rest(events, i, &seq[1..], delta_t))
        .map(|i| events[i].offset)
}
