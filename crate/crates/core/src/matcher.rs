//! Pattern-match statistics between sensors and candidate causer selection.
//!
//! A timestamp `t'` of a neighbor matches a target timestamp `t` when the
//! neighbor's pattern starts no later than the target's and at most `lag`
//! earlier: `0 ≤ t − t' ≤ lag`. Timestamps and lag share a unit (minutes
//! throughout this crate).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{haversine_km, Category, Minutes, SensorMeta, SeriesKey};
use crate::error::{Error, Result};
use crate::fep::PatternSet;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchedSets {
    /// Target timestamps with at least one matching neighbor timestamp.
    pub target: Vec<Minutes>,
    /// Neighbor timestamps matching at least one target timestamp.
    pub neighbor: Vec<Minutes>,
    /// Every matching `(target, neighbor)` pair.
    pub pairs: Vec<(Minutes, Minutes)>,
}

/// Linear merge scan over two ascending, duplicate-free lists.
pub fn match_timestamps(target: &[Minutes], neighbor: &[Minutes], lag: Minutes) -> MatchedSets {
    debug_assert!(target.windows(2).all(|w| w[0] < w[1]));
    debug_assert!(neighbor.windows(2).all(|w| w[0] < w[1]));
    let mut out = MatchedSets::default();

    let mut lo = 0;
    for &t in target {
        while lo < neighbor.len() && neighbor[lo] < t - lag {
            lo += 1;
        }
        let mut j = lo;
        while j < neighbor.len() && neighbor[j] <= t {
            out.pairs.push((t, neighbor[j]));
            j += 1;
        }
        if j > lo {
            out.target.push(t);
        }
    }

    let mut k = 0;
    for &n in neighbor {
        while k < target.len() && target[k] < n {
            k += 1;
        }
        if k < target.len() && target[k] <= n + lag {
            out.neighbor.push(n);
        }
    }
    out
}

/// How precision and recall are combined into one correlation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrFormula {
    /// `2PR / (P + R)`.
    #[default]
    Harmonic,
    /// `2P / (P + R)`, without the recall factor in the numerator.
    Unweighted,
}

impl CorrFormula {
    pub fn combine(self, precision: f64, recall: f64) -> f64 {
        let denom = precision + recall;
        if denom <= 0.0 {
            return 0.0;
        }
        match self {
            CorrFormula::Harmonic => 2.0 * precision * recall / denom,
            CorrFormula::Unweighted => 2.0 * precision / denom,
        }
    }
}

impl std::str::FromStr for CorrFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(CorrFormula::Harmonic),
            "unweighted" => Ok(CorrFormula::Unweighted),
            _ => Err(Error::InvalidParameter(format!("unknown correlation formula `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchStats {
    /// Share of neighbor timestamps that match the target.
    pub precision: f64,
    /// Share of target timestamps matched by the neighbor.
    pub recall: f64,
    pub corr: f64,
    pub matched_pairs: Vec<(Minutes, Minutes)>,
    pub lag: Minutes,
}

pub fn match_stats(target: &[Minutes], neighbor: &[Minutes], lag: Minutes) -> Result<MatchStats> {
    match_stats_with(target, neighbor, lag, CorrFormula::Harmonic)
}

pub fn match_stats_with(target: &[Minutes], neighbor: &[Minutes], lag: Minutes, formula: CorrFormula) -> Result<MatchStats> {
    if target.is_empty() || neighbor.is_empty() {
        return Err(Error::EmptyTimestampList);
    }
    let m = match_timestamps(target, neighbor, lag);
    let precision = m.neighbor.len() as f64 / neighbor.len() as f64;
    let recall = m.target.len() as f64 / target.len() as f64;
    Ok(MatchStats {
        precision,
        recall,
        corr: formula.combine(precision, recall),
        matched_pairs: m.pairs,
        lag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sensor: String,
    /// Category of the neighbor whose patterns correlate best with the target.
    pub category: Category,
    pub corr: f64,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub target: SeriesKey,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn keys(&self) -> impl Iterator<Item = SeriesKey> + '_ {
        self.candidates.iter().map(|c| SeriesKey::new(c.category, c.sensor.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateParams {
    pub max_distance_km: f64,
    pub min_corr: f64,
    pub lag: Minutes,
    pub top_x: usize,
    pub formula: CorrFormula,
}

impl Default for CandidateParams {
    fn default() -> Self {
        Self {
            max_distance_km: 15.0,
            min_corr: 0.5,
            lag: 180,
            top_x: 5,
            formula: CorrFormula::Harmonic,
        }
    }
}

fn ranking(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.corr
        .total_cmp(&a.corr)
        .then(a.distance_km.total_cmp(&b.distance_km))
        .then_with(|| a.sensor.cmp(&b.sensor))
}

/// Ranks the neighbors of `target` whose patterns tend to start shortly
/// before the target's.
pub fn candidate_causers(target: &SeriesKey, patterns: &[PatternSet], meta: &[SensorMeta], params: &CandidateParams) -> Result<CandidateSet> {
    let target_ts = patterns
        .iter()
        .find(|p| &p.key == target)
        .map(PatternSet::start_timestamps)
        .unwrap_or_default();
    if target_ts.is_empty() {
        return Err(Error::NoPatterns(target.to_string()));
    }
    let positions: BTreeMap<&str, (f64, f64)> = meta.iter().map(|m| (m.sensor_id.as_str(), m.position())).collect();
    let origin = *positions
        .get(target.sensor.as_str())
        .ok_or_else(|| Error::UnknownSensor(target.sensor.clone()))?;

    // neighbor sensor -> per category start timestamps, in category order
    let mut by_sensor: BTreeMap<&str, BTreeMap<Category, Vec<Minutes>>> = BTreeMap::new();
    for set in patterns.iter().filter(|p| p.key.sensor != target.sensor) {
        let ts = set.start_timestamps();
        if !ts.is_empty() {
            by_sensor.entry(set.key.sensor.as_str()).or_default().insert(set.key.category, ts);
        }
    }

    let mut candidates = Vec::new();
    for (sensor, categories) in by_sensor {
        let pos = *positions.get(sensor).ok_or_else(|| Error::UnknownSensor(sensor.to_string()))?;
        let distance_km = haversine_km(origin, pos);
        if distance_km > params.max_distance_km {
            continue;
        }
        let mut best: Option<(Category, f64)> = None;
        for (&category, ts) in &categories {
            let corr = match_stats_with(&target_ts, ts, params.lag, params.formula)?.corr;
            if best.is_none_or(|(_, b)| corr > b) {
                best = Some((category, corr));
            }
        }
        if let Some((category, corr)) = best {
            if corr >= params.min_corr {
                candidates.push(Candidate {
                    sensor: sensor.to_string(),
                    category,
                    corr,
                    distance_km,
                });
            }
        }
    }
    candidates.sort_by(ranking);
    candidates.truncate(params.top_x);
    Ok(CandidateSet {
        target: target.clone(),
        candidates,
    })
}

/// Target pattern starts that some candidate's pattern precedes within
/// `lag`. With no candidates every target start is kept.
pub fn matched_training_windows(target: &PatternSet, candidates: &[&PatternSet], lag: Minutes) -> Vec<Minutes> {
    let target_ts = target.start_timestamps();
    if candidates.is_empty() {
        return target_ts;
    }
    let mut out: Vec<Minutes> = candidates
        .iter()
        .flat_map(|c| match_timestamps(&target_ts, &c.start_timestamps(), lag).target)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fep::{EvolvingPattern, Occurrence};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn brute(target: &[Minutes], neighbor: &[Minutes], lag: Minutes) -> MatchedSets {
        let ok = |t: Minutes, n: Minutes| 0 <= t - n && t - n <= lag;
        MatchedSets {
            target: target.iter().copied().filter(|&t| neighbor.iter().any(|&n| ok(t, n))).collect(),
            neighbor: neighbor.iter().copied().filter(|&n| target.iter().any(|&t| ok(t, n))).collect(),
            pairs: target
                .iter()
                .flat_map(|&t| neighbor.iter().filter(move |&&n| ok(t, n)).map(move |&n| (t, n)))
                .collect(),
        }
    }

    #[test]
    fn small_example() {
        let m = match_timestamps(&[10, 20, 100], &[9, 18, 50], 3);
        assert_eq!(m.target, vec![10, 20]);
        assert_eq!(m.neighbor, vec![9, 18]);
        let s = match_stats(&[10, 20, 100], &[9, 18, 50], 3).unwrap();
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.corr - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_lists() {
        let ts = [0, 60, 61, 500];
        for lag in [0, 5, 1000] {
            let m = match_timestamps(&ts, &ts, lag);
            assert_eq!((m.target.as_slice(), m.neighbor.as_slice()), (&ts[..], &ts[..]));
            let s = match_stats(&ts, &ts, lag).unwrap();
            assert_eq!((s.precision, s.recall, s.corr), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn disjoint_lists() {
        let s = match_stats(&[100, 200], &[0, 10], 5).unwrap();
        assert_eq!((s.precision, s.recall, s.corr), (0.0, 0.0, 0.0));
        assert!(s.matched_pairs.is_empty());
        // the neighbor comes after the target: never a match
        assert!(match_timestamps(&[100], &[101], 1000).pairs.is_empty());
    }

    #[test]
    fn empty_list_is_an_error() {
        assert!(matches!(match_stats(&[], &[1], 3), Err(Error::EmptyTimestampList)));
        assert!(matches!(match_stats(&[1], &[], 3), Err(Error::EmptyTimestampList)));
    }

    #[test]
    fn unweighted_formula() {
        assert!((CorrFormula::Unweighted.combine(0.5, 0.25) - 1.0 / 0.75).abs() < 1e-15);
        assert_eq!(CorrFormula::Unweighted.combine(0.0, 0.0), 0.0);
    }

    fn pset(sensor: &str, category: u8, starts: &[Minutes]) -> PatternSet {
        PatternSet {
            key: SeriesKey::new(Category(category), sensor),
            sigma: 0.1,
            delta_t: 60,
            patterns: vec![EvolvingPattern {
                levels: vec![1, 2],
                support: starts.len(),
                occurrences: starts.iter().enumerate().map(|(day, &start)| Occurrence { day, start }).collect(),
            }],
        }
    }

    /// Sensors on the equator; one degree of longitude is about 111.19 km.
    fn meta(ids: &[(&str, f64)]) -> Vec<SensorMeta> {
        ids.iter().map(|&(id, lon)| SensorMeta::new(id, "c", 0.0, lon).unwrap()).collect()
    }

    #[test]
    fn distance_gate_and_perfect_correlate() {
        let ts = [100, 1600, 3100];
        let sets = vec![pset("t", 0, &ts), pset("near", 1, &ts), pset("far", 0, &ts)];
        let m = meta(&[("t", 0.0), ("near", 0.009), ("far", 0.2)]);
        let params = CandidateParams {
            max_distance_km: 15.0,
            ..Default::default()
        };
        let c = candidate_causers(&SeriesKey::new(Category(0), "t"), &sets, &m, &params).unwrap();
        assert_eq!(c.candidates.len(), 1);
        assert_eq!(c.candidates[0].sensor, "near");
        assert_eq!(c.candidates[0].corr, 1.0);
        assert!((c.candidates[0].distance_km - 1.0).abs() < 0.01);
    }

    #[test]
    fn target_without_patterns() {
        let sets = vec![pset("n", 0, &[1])];
        let m = meta(&[("t", 0.0), ("n", 0.01)]);
        let r = candidate_causers(&SeriesKey::new(Category(0), "t"), &sets, &m, &CandidateParams::default());
        assert!(matches!(r, Err(Error::NoPatterns(_))));
    }

    /// Five neighbors, two categories each; the oracle scores every pair
    /// directly from the precision/recall definitions.
    #[test]
    fn five_sensor_ranking_matches_oracle() {
        let target: Vec<Minutes> = vec![600, 1200, 2000, 2600, 4000, 5000];
        let neighbors: Vec<(&str, f64, [Vec<Minutes>; 2])> = vec![
            ("a", 0.05, [vec![500, 1100, 1900, 2500], vec![590, 4990]]),
            ("b", 0.02, [vec![420, 1020, 1820, 2420, 3820, 4820], vec![0, 9000]]),
            ("c", 0.10, [vec![100, 700], vec![595, 1190, 1995, 2590, 3990, 4995]]),
            ("d", 0.01, [vec![600, 1200, 2000], vec![10_000]]),
            ("e", 0.08, [vec![590, 1195], vec![2590, 3995]]),
        ];
        let mut sets = vec![pset("t", 0, &target)];
        let mut m = vec![SensorMeta::new("t", "c", 0.0, 0.0).unwrap()];
        for (id, lon, cats) in &neighbors {
            m.push(SensorMeta::new(*id, "c", 0.0, *lon).unwrap());
            for (c, ts) in cats.iter().enumerate() {
                sets.push(pset(id, c as u8, ts));
            }
        }
        let params = CandidateParams {
            max_distance_km: 200.0,
            min_corr: 0.5,
            lag: 180,
            top_x: 10,
            formula: CorrFormula::Harmonic,
        };
        let got = candidate_causers(&SeriesKey::new(Category(0), "t"), &sets, &m, &params).unwrap();

        let lag = 180;
        let mut expected: Vec<(String, u8, f64, f64)> = Vec::new();
        for (id, lon, cats) in &neighbors {
            let mut best = (0u8, -1.0);
            for (c, ts) in cats.iter().enumerate() {
                let p = ts.iter().filter(|&&n| target.iter().any(|&t| t >= n && t - n <= lag)).count() as f64 / ts.len() as f64;
                let r = target.iter().filter(|&&t| ts.iter().any(|&n| t >= n && t - n <= lag)).count() as f64 / target.len() as f64;
                let corr = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
                if corr > best.1 {
                    best = (c as u8, corr);
                }
            }
            if best.1 >= 0.5 {
                expected.push((id.to_string(), best.0, best.1, *lon));
            }
        }
        expected.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.3.total_cmp(&b.3)));
        let got_summary: Vec<(String, u8, f64)> = got.candidates.iter().map(|c| (c.sensor.clone(), c.category.0, c.corr)).collect();
        let exp_summary: Vec<(String, u8, f64)> = expected.into_iter().map(|(s, c, r, _)| (s, c, r)).collect();
        assert_eq!(got_summary, exp_summary);
        assert!(got.candidates.len() >= 3);
    }

    #[test]
    fn training_windows() {
        let target = pset("t", 0, &[100, 200, 300, 400]);
        let none = pset("a", 0, &[1000]);
        assert!(matched_training_windows(&target, &[&none], 30).is_empty());
        assert_eq!(matched_training_windows(&target, &[], 30), vec![100, 200, 300, 400]);
        let same = pset("b", 0, &[100, 200, 300, 400]);
        assert_eq!(matched_training_windows(&target, &[&same], 0), vec![100, 200, 300, 400]);

        let c1 = pset("c1", 0, &[90, 1000]);
        let c2 = pset("c2", 1, &[250, 280]);
        let c3 = pset("c3", 2, &[95, 390]);
        let got = matched_training_windows(&target, &[&c1, &c2, &c3], 30);
        let t = target.start_timestamps();
        let mut want = BTreeSet::new();
        for c in [&c1, &c2, &c3] {
            for &x in &t {
                for y in c.start_timestamps() {
                    if x >= y && x - y <= 30 {
                        want.insert(x);
                    }
                }
            }
        }
        assert_eq!(got, want.into_iter().collect::<Vec<_>>());
        assert_eq!(got, vec![100, 300, 400]);
    }

    fn sorted_set(max: usize) -> impl Strategy<Value = Vec<Minutes>> {
        prop::collection::btree_set(0i64..2000, 1..max).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn merge_scan_matches_brute_force(a in sorted_set(40), b in sorted_set(40), lag in 0i64..200) {
            prop_assert_eq!(match_timestamps(&a, &b, lag), brute(&a, &b, lag));
        }
    }

    proptest! {
        #[test]
        fn swapping_roles(a in sorted_set(30), b in sorted_set(30), lag in 0i64..200) {
            // reversing time turns "neighbor leads target" into "target leads neighbor"
            let rev = |v: &[Minutes]| { let mut r: Vec<Minutes> = v.iter().map(|x| -x).collect(); r.reverse(); r };
            let s = match_stats(&a, &b, lag).unwrap();
            let t = match_stats(&rev(&b), &rev(&a), lag).unwrap();
            prop_assert_eq!(s.precision, t.recall);
            prop_assert_eq!(s.recall, t.precision);
            prop_assert!((s.corr - t.corr).abs() < 1e-15);
        }

        #[test]
        fn larger_lag_never_hurts(a in sorted_set(30), b in sorted_set(30), lag in 0i64..200, extra in 0i64..200) {
            let s = match_stats(&a, &b, lag).unwrap();
            let t = match_stats(&a, &b, lag + extra).unwrap();
            prop_assert!(t.precision >= s.precision && t.recall >= s.recall && t.corr >= s.corr);
        }

        #[test]
        fn ranking_ignores_input_order(
            lists in prop::collection::vec(sorted_set(10), 6),
            lons in prop::collection::vec(0.0f64..0.1, 5),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut sets = vec![pset("t", 0, &lists[0])];
            let mut m = vec![SensorMeta::new("t", "c", 0.0, 0.0).unwrap()];
            for i in 0..5 {
                let id = format!("n{i}");
                sets.push(pset(&id, (i % 2) as u8, &lists[i + 1]));
                m.push(SensorMeta::new(id, "c", 0.0, lons[i]).unwrap());
            }
            let params = CandidateParams { max_distance_km: 100.0, min_corr: 0.0, lag: 100, top_x: 3, formula: CorrFormula::Harmonic };
            let key = SeriesKey::new(Category(0), "t");
            let a = candidate_causers(&key, &sets, &m, &params).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            sets.shuffle(&mut rng);
            m.shuffle(&mut rng);
            prop_assert_eq!(a, candidate_causers(&key, &sets, &m, &params).unwrap());
        }
    }
}
