//! Per-objective performance series and cohort statistics.
//!
//! For a student and a subject (objective, objective set or whole unit) the
//! records falling in interval `k` yield one [`SeriesPoint`]: attempt count,
//! mean duration and accuracy. Intervals with no attempts carry no mean
//! values at all.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formative::RewardConfig;
use crate::model::{AttemptRecord, Difficulty, ModeFilter, ObjectiveGraph, ObjectiveId, ObjectiveSet};

/// Contiguous half-open intervals `[origin + k*width, origin + (k+1)*width)`
/// for `k` in `0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalScheme {
    pub origin: DateTime<Utc>,
    pub width_secs: i64,
    pub count: usize,
}

impl IntervalScheme {
    pub fn new(origin: DateTime<Utc>, width: Duration, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidScheme("interval count must be positive".into()));
        }
        if width <= Duration::zero() {
            return Err(Error::InvalidScheme("interval width must be positive".into()));
        }
        Ok(IntervalScheme {
            origin,
            width_secs: width.num_seconds(),
            count,
        })
    }

    /// Origin at the UTC midnight of the earliest timestamp (or `origin` when
    /// given); count just large enough to cover the latest one.
    pub fn fit(
        timestamps: impl IntoIterator<Item = DateTime<Utc>>,
        width_days: u32,
        origin: Option<DateTime<Utc>>,
        count: Option<usize>,
    ) -> Result<Self> {
        if width_days == 0 {
            return Err(Error::InvalidScheme("interval width must be positive".into()));
        }
        let width = Duration::days(i64::from(width_days));
        let (mut lo, mut hi) = (None::<DateTime<Utc>>, None::<DateTime<Utc>>);
        for t in timestamps {
            lo = Some(lo.map_or(t, |l| l.min(t)));
            hi = Some(hi.map_or(t, |h| h.max(t)));
        }
        let origin = match (origin, lo) {
            (Some(o), _) => o,
            (None, Some(l)) => midnight(l),
            (None, None) => Utc.timestamp_opt(0, 0).unwrap(),
        };
        let count = match (count, hi) {
            (Some(c), _) => c,
            (None, Some(h)) if h >= origin => {
                ((h - origin).num_seconds() / width.num_seconds()) as usize + 1
            }
            (None, _) => 1,
        };
        IntervalScheme::new(origin, width, count)
    }

    /// Zero-based interval index containing `t`, if inside the scheme.
    pub fn index_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let offset = (t - self.origin).num_seconds();
        if offset < 0 {
            return None;
        }
        let k = (offset / self.width_secs) as usize;
        (k < self.count).then_some(k)
    }

    pub fn start_of(&self, k: usize) -> DateTime<Utc> {
        self.origin + Duration::seconds(self.width_secs * k as i64)
    }
}

fn midnight(t: DateTime<Utc>) -> DateTime<Utc> {
    Utc.from_utc_datetime(&t.date_naive().and_hms_opt(0, 0, 0).unwrap())
}

/// Interval schemes per unit, all sharing a width. Every objective's series
/// uses the scheme of its own unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSet {
    pub width_days: u32,
    pub units: BTreeMap<String, IntervalScheme>,
}

impl SchemeSet {
    /// Fits one scheme per unit over the records (of any student) touching
    /// that unit.
    pub fn fit(
        records: &[AttemptRecord],
        graph: &ObjectiveGraph,
        width_days: u32,
        origin: Option<DateTime<Utc>>,
        count: Option<usize>,
    ) -> Result<Self> {
        let mut stamps: BTreeMap<&str, Vec<DateTime<Utc>>> = BTreeMap::new();
        for r in records {
            let units: BTreeSet<&str> = r.objectives.iter().filter_map(|o| graph.unit_of(o).ok()).collect();
            for u in units {
                stamps.entry(u).or_default().push(r.timestamp);
            }
        }
        let mut units = BTreeMap::new();
        for unit in graph.units() {
            let ts = stamps.remove(unit.id.as_str()).unwrap_or_default();
            units.insert(unit.id.clone(), IntervalScheme::fit(ts, width_days, origin, count)?);
        }
        Ok(SchemeSet { width_days, units })
    }

    pub fn for_unit(&self, unit_id: &str) -> Result<&IntervalScheme> {
        self.units
            .get(unit_id)
            .ok_or_else(|| Error::UnknownUnit(unit_id.to_owned()))
    }

    pub fn for_objective(&self, graph: &ObjectiveGraph, obj: &ObjectiveId) -> Result<&IntervalScheme> {
        self.for_unit(graph.unit_of(obj)?)
    }
}

/// What a series aggregates over.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesTarget {
    /// Records tagged with this objective.
    Objective { id: ObjectiveId },
    /// Records whose tags include every member of the set.
    Set { objectives: ObjectiveSet },
    /// Records tagged with at least one objective of the unit.
    Unit { unit_id: String },
}

impl SeriesTarget {
    pub fn objective(id: impl Into<ObjectiveId>) -> Self {
        SeriesTarget::Objective { id: id.into() }
    }

    pub fn matches(&self, record: &AttemptRecord, graph: &ObjectiveGraph) -> bool {
        match self {
            SeriesTarget::Objective { id } => record.objectives.contains(id),
            SeriesTarget::Set { objectives } => objectives.is_subset(&record.objectives),
            SeriesTarget::Unit { unit_id } => record
                .objectives
                .iter()
                .any(|o| graph.unit_of(o).is_ok_and(|u| u == unit_id)),
        }
    }

    fn check(&self, graph: &ObjectiveGraph) -> Result<()> {
        match self {
            SeriesTarget::Objective { id } => graph.objective(id).map(drop),
            SeriesTarget::Set { objectives } => {
                if objectives.is_empty() {
                    return Err(Error::InvalidData("empty objective set".into()));
                }
                objectives.iter().try_for_each(|o| graph.objective(o).map(drop))
            }
            SeriesTarget::Unit { unit_id } => graph.unit(unit_id).map(drop),
        }
    }

    /// Stable textual key.
    pub fn key(&self) -> String {
        match self {
            SeriesTarget::Objective { id } => id.to_string(),
            SeriesTarget::Set { objectives } => objectives.key(),
            SeriesTarget::Unit { unit_id } => format!("unit:{unit_id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesSubject {
    pub student_id: String,
    pub target: SeriesTarget,
    pub mode: ModeFilter,
}

/// Aggregate of one interval. `mean_duration` and `accuracy` are present iff
/// `count > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub count: usize,
    pub correct: usize,
    pub total_duration: f64,
    pub mean_duration: Option<f64>,
    pub accuracy: Option<f64>,
}

impl SeriesPoint {
    pub fn empty() -> Self {
        SeriesPoint {
            count: 0,
            correct: 0,
            total_duration: 0.0,
            mean_duration: None,
            accuracy: None,
        }
    }

    pub fn from_sums(count: usize, correct: usize, total_duration: f64) -> Self {
        if count == 0 {
            return SeriesPoint::empty();
        }
        SeriesPoint {
            count,
            correct,
            total_duration,
            mean_duration: Some(total_duration / count as f64),
            accuracy: Some(correct as f64 / count as f64),
        }
    }

    pub fn is_present(&self) -> bool {
        self.count > 0
    }

    pub fn value(&self, measure: Measure) -> Option<f64> {
        if !self.is_present() {
            return None;
        }
        match measure {
            Measure::Count => Some(self.count as f64),
            Measure::MeanDuration => self.mean_duration,
            Measure::Accuracy => self.accuracy,
        }
    }

    /// Pools two intervals into one.
    pub fn merge(&self, other: &SeriesPoint) -> SeriesPoint {
        SeriesPoint::from_sums(
            self.count + other.count,
            self.correct + other.correct,
            self.total_duration + other.total_duration,
        )
    }
}

/// Measure dimension of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Count,
    MeanDuration,
    Accuracy,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Count, Measure::MeanDuration, Measure::Accuracy];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Count => "count",
            Measure::MeanDuration => "mean_duration",
            Measure::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSeries {
    pub subject: SeriesSubject,
    pub points: Vec<SeriesPoint>,
}

impl PerformanceSeries {
    /// `(interval index, value)` for every present point.
    pub fn values(&self, measure: Measure) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.value(measure).map(|v| (k, v)))
            .collect()
    }

    /// All intervals pooled.
    pub fn total(&self) -> SeriesPoint {
        self.points
            .iter()
            .fold(SeriesPoint::empty(), |acc, p| acc.merge(p))
    }
}

/// Running sums. Durations are kept and summed in sorted order so the result
/// does not depend on record order.
#[derive(Debug, Clone, Default)]
pub(crate) struct Accum {
    count: usize,
    correct: usize,
    durations: Vec<f64>,
}

impl Accum {
    pub(crate) fn add(&mut self, r: &AttemptRecord) {
        self.count += 1;
        self.correct += usize::from(r.correct);
        self.durations.push(r.duration);
    }

    pub(crate) fn point(&self) -> SeriesPoint {
        let mut d = self.durations.clone();
        d.sort_by(f64::total_cmp);
        SeriesPoint::from_sums(self.count, self.correct, d.iter().sum())
    }

    /// Like [`Accum::point`] but sorts in place instead of copying.
    pub(crate) fn into_point(mut self) -> SeriesPoint {
        self.durations.sort_by(f64::total_cmp);
        SeriesPoint::from_sums(self.count, self.correct, self.durations.iter().sum())
    }
}

/// Builds the series of `subject` under `scheme`. Records outside the scheme
/// window are ignored.
pub fn build_series(
    records: &[AttemptRecord],
    scheme: &IntervalScheme,
    subject: &SeriesSubject,
    graph: &ObjectiveGraph,
) -> Result<PerformanceSeries> {
    if scheme.count == 0 {
        return Err(Error::InvalidScheme("interval count must be positive".into()));
    }
    subject.target.check(graph)?;
    let mut accums = vec![Accum::default(); scheme.count];
    for r in records {
        if r.student_id != subject.student_id
            || !subject.mode.admits(r.mode)
            || !subject.target.matches(r, graph)
        {
            continue;
        }
        if let Some(k) = scheme.index_of(r.timestamp) {
            accums[k].add(r);
        }
    }
    Ok(PerformanceSeries {
        subject: subject.clone(),
        points: accums.iter().map(Accum::point).collect(),
    })
}

/// Per-difficulty attempt/correct counts; enough to evaluate a
/// difficulty-weighted accuracy under any weight choice.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyBreakdown {
    pub easy: (usize, usize),
    pub medium: (usize, usize),
    pub hard: (usize, usize),
}

impl DifficultyBreakdown {
    pub fn add(&mut self, difficulty: Difficulty, correct: bool) {
        let slot = self.slot_mut(difficulty);
        slot.0 += 1;
        slot.1 += usize::from(correct);
    }

    fn slot_mut(&mut self, difficulty: Difficulty) -> &mut (usize, usize) {
        match difficulty {
            Difficulty::Easy => &mut self.easy,
            Difficulty::Medium => &mut self.medium,
            Difficulty::Hard => &mut self.hard,
        }
    }

    /// `(attempts, correct)` at a difficulty level.
    pub fn get(&self, difficulty: Difficulty) -> (usize, usize) {
        match difficulty {
            Difficulty::Easy => self.easy,
            Difficulty::Medium => self.medium,
            Difficulty::Hard => self.hard,
        }
    }

    pub fn attempts(&self) -> usize {
        self.easy.0 + self.medium.0 + self.hard.0
    }
}

/// Peer statistics for one (objective, mode, interval) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCell {
    pub objective: ObjectiveId,
    pub mode: ModeFilter,
    pub interval: usize,
    pub peer_mean_accuracy: f64,
    pub peer_mean_duration: f64,
    pub peer_mean_count: f64,
    pub cohort_size: usize,
}

/// Peer statistics for one (objective, mode) over the whole window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTotal {
    pub objective: ObjectiveId,
    pub mode: ModeFilter,
    pub peer_mean_accuracy: f64,
    pub peer_mean_duration: f64,
    pub peer_mean_count: f64,
    pub peer_mean_mastery: f64,
    pub cohort_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortUnit {
    pub unit_id: String,
    pub peer_mean_accuracy: f64,
    pub cohort_size: usize,
}

/// Peer means over exactly the students with attempts in each cell. The
/// focal student is part of the cohort.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub cells: Vec<CohortCell>,
    pub totals: Vec<CohortTotal>,
    pub units: Vec<CohortUnit>,
}

impl CohortStats {
    pub fn cell(&self, objective: &ObjectiveId, mode: ModeFilter, interval: usize) -> Option<&CohortCell> {
        self.cells
            .iter()
            .find(|c| &c.objective == objective && c.mode == mode && c.interval == interval)
    }

    pub fn total(&self, objective: &ObjectiveId, mode: ModeFilter) -> Option<&CohortTotal> {
        self.totals
            .iter()
            .find(|c| &c.objective == objective && c.mode == mode)
    }

    pub fn unit(&self, unit_id: &str) -> Option<&CohortUnit> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }
}

#[derive(Default)]
struct StudentCell {
    accum: Accum,
    breakdown: DifficultyBreakdown,
}

fn mean(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    (v.iter().sum::<f64>() / n as f64, n)
}

/// Cohort statistics over every record, for every objective in the graph and
/// every mode filter.
pub fn build_cohort_stats(
    records: &[AttemptRecord],
    schemes: &SchemeSet,
    graph: &ObjectiveGraph,
    weights: &RewardConfig,
) -> Result<CohortStats> {
    type CellKey<'a> = (&'a ObjectiveId, ModeFilter, usize);
    // Accumulate per student first so the per-record work touches small maps;
    // students are visited in id order, which fixes the order of the means.
    let mut by_student: BTreeMap<&str, Vec<&AttemptRecord>> = BTreeMap::new();
    for r in records {
        by_student.entry(&r.student_id).or_default().push(r);
    }
    let mut cells: BTreeMap<CellKey, Vec<SeriesPoint>> = BTreeMap::new();
    let mut totals: BTreeMap<(&ObjectiveId, ModeFilter), Vec<StudentCell>> = BTreeMap::new();
    let mut units: BTreeMap<&str, Vec<SeriesPoint>> = BTreeMap::new();

    for student_records in by_student.values() {
        let mut s_cells: BTreeMap<CellKey, Accum> = BTreeMap::new();
        let mut s_totals: BTreeMap<(&ObjectiveId, ModeFilter), StudentCell> = BTreeMap::new();
        let mut s_units: BTreeMap<&str, Accum> = BTreeMap::new();
        for r in student_records {
            let mut seen_units = BTreeSet::new();
            for obj in r.objectives.iter() {
                let unit = graph.unit_of(obj)?;
                let Some(k) = schemes.for_unit(unit)?.index_of(r.timestamp) else {
                    continue;
                };
                if seen_units.insert(unit) {
                    s_units.entry(unit).or_default().add(r);
                }
                for mode in ModeFilter::ALL.into_iter().filter(|m| m.admits(r.mode)) {
                    s_cells.entry((obj, mode, k)).or_default().add(r);
                    let cell = s_totals.entry((obj, mode)).or_default();
                    cell.accum.add(r);
                    cell.breakdown.add(r.difficulty, r.correct);
                }
            }
        }
        for (key, acc) in s_cells {
            cells.entry(key).or_default().push(acc.into_point());
        }
        for (key, cell) in s_totals {
            totals.entry(key).or_default().push(cell);
        }
        for (unit, acc) in s_units {
            units.entry(unit).or_default().push(acc.into_point());
        }
    }

    let mut out = CohortStats::default();
    for ((objective, mode, interval), points) in cells {
        let (acc, n) = mean(points.iter().filter_map(|p| p.accuracy));
        let (dur, _) = mean(points.iter().filter_map(|p| p.mean_duration));
        let (cnt, _) = mean(points.iter().map(|p| p.count as f64));
        out.cells.push(CohortCell {
            objective: objective.clone(),
            mode,
            interval,
            peer_mean_accuracy: acc,
            peer_mean_duration: dur,
            peer_mean_count: cnt,
            cohort_size: n,
        });
    }
    for ((objective, mode), students) in totals {
        let points: Vec<SeriesPoint> = students.iter().map(|c| c.accum.point()).collect();
        let (acc, n) = mean(points.iter().filter_map(|p| p.accuracy));
        let (dur, _) = mean(points.iter().filter_map(|p| p.mean_duration));
        let (cnt, _) = mean(points.iter().map(|p| p.count as f64));
        let (mastery, _) = mean(
            students
                .iter()
                .filter_map(|c| weights.weighted_accuracy(&c.breakdown)),
        );
        out.totals.push(CohortTotal {
            objective: objective.clone(),
            mode,
            peer_mean_accuracy: acc,
            peer_mean_duration: dur,
            peer_mean_count: cnt,
            peer_mean_mastery: mastery,
            cohort_size: n,
        });
    }
    for (unit_id, points) in units {
        let (acc, n) = mean(points.iter().filter_map(|p| p.accuracy));
        out.units.push(CohortUnit {
            unit_id: unit_id.to_owned(),
            peer_mean_accuracy: acc,
            cohort_size: n,
        });
    }
    Ok(out)
}
