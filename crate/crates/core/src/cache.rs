//! Offline metrics cache.
//!
//! One JSON document per (student, unit) holds every series, indicator and
//! cohort figure the report generator and the Q&A engine read, so neither
//! touches raw records at request time. Entry files are named by the hash of
//! their content; `index.json` maps `(student, unit)` to the current file and
//! the hash of the inputs it was built from.
//!
//! Layout of a cache directory:
//!
//! ```text
//! index.json            {"version": "...", "entries": {"<student>/<unit>": {"file", "input_hash"}}}
//! entry-<hash16>.json   CacheEntry
//! ```
//!
//! Files are written to a temporary name and renamed into place, so readers
//! never observe a partial document. A single writer is assumed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{
    build_cohort_stats, Accum, CohortStats, DifficultyBreakdown, PerformanceSeries, SchemeSet, SeriesSubject,
    SeriesTarget,
};
use crate::config::{AggregationSettings, CohortScope};
use crate::error::{Error, Result};
use crate::formative::{DifficultyProfile, FormativeIndicators};
use crate::insight::SubspaceTarget;
use crate::model::{
    associated_sets, AssociatedSet, AttemptRecord, ModeFilter, ObjectiveGraph, ObjectiveId, QuestionCatalog,
};

pub const CACHE_VERSION: &str = "journey-cache/1";

/// Record mass of the unit per mode, with multi-objective records split
/// evenly across the unit objectives they carry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShareTable {
    /// In-unit records, all modes.
    pub total: usize,
    pub per_mode: BTreeMap<ModeFilter, ModeShare>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeShare {
    pub records: usize,
    pub objective_mass: BTreeMap<ObjectiveId, f64>,
}

impl ShareTable {
    /// Fraction of the student's in-unit records a subspace covers.
    pub fn impact(&self, mode: ModeFilter, target: &SubspaceTarget) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let Some(share) = self.per_mode.get(&mode) else {
            return 0.0;
        };
        let mass = match target {
            SubspaceTarget::All => share.records as f64,
            SubspaceTarget::Objective { id } => share.objective_mass.get(id).copied().unwrap_or(0.0),
            SubspaceTarget::Set { objectives } => objectives
                .iter()
                .map(|id| share.objective_mass.get(id).copied().unwrap_or(0.0))
                .sum(),
        };
        mass / self.total as f64
    }
}

/// Aggregated view of one student in one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub version: String,
    pub student_id: String,
    pub unit_id: String,
    pub input_hash: String,
    pub settings: AggregationSettings,
    pub schemes: SchemeSet,
    /// Objective series for every graph objective, unit series for every
    /// unit, and set series for the unit's associated sets; each in all three
    /// mode filters.
    pub series: Vec<PerformanceSeries>,
    pub breakdowns: BTreeMap<ObjectiveId, DifficultyBreakdown>,
    pub difficulty_profiles: BTreeMap<ObjectiveId, DifficultyProfile>,
    pub indicators: BTreeMap<ObjectiveId, FormativeIndicators>,
    pub associated: BTreeMap<ObjectiveId, Vec<AssociatedSet>>,
    pub shares: ShareTable,
    pub cohort: CohortStats,
}

impl CacheEntry {
    pub fn series(&self, target: &SeriesTarget, mode: ModeFilter) -> Option<&PerformanceSeries> {
        self.series
            .iter()
            .find(|s| &s.subject.target == target && s.subject.mode == mode)
    }

    pub fn objective_series(&self, id: &ObjectiveId, mode: ModeFilter) -> Option<&PerformanceSeries> {
        self.series(&SeriesTarget::Objective { id: id.clone() }, mode)
    }

    pub fn unit_series(&self, unit_id: &str, mode: ModeFilter) -> Option<&PerformanceSeries> {
        self.series(
            &SeriesTarget::Unit {
                unit_id: unit_id.to_owned(),
            },
            mode,
        )
    }

    pub fn mastery(&self, id: &ObjectiveId) -> Option<f64> {
        self.indicators.get(id).and_then(|i| i.actual_reward)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Raw records behind a read counter, so callers can assert which stages
/// touch them.
#[derive(Debug, Default)]
pub struct RecordStore {
    records: Vec<AttemptRecord>,
    reads: AtomicUsize,
}

impl RecordStore {
    pub fn new(records: Vec<AttemptRecord>) -> Self {
        RecordStore {
            records,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn records(&self) -> &[AttemptRecord] {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.records
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn reset_reads(&self) {
        self.reads.store(0, Ordering::Relaxed);
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of everything an entry is derived from. Records are hashed in
/// canonical order so reordering the input file does not invalidate entries.
pub fn input_hash(
    graph: &ObjectiveGraph,
    records: &[AttemptRecord],
    catalog: &QuestionCatalog,
    settings: &AggregationSettings,
) -> Result<String> {
    let mut sorted: Vec<&AttemptRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.student_id, a.timestamp, &a.question_id, a.mode, a.correct)
            .cmp(&(&b.student_id, b.timestamp, &b.question_id, b.mode, b.correct))
            .then(a.duration.total_cmp(&b.duration))
    });
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&graph.to_document())?);
    h.update(b"\n--records--\n");
    for r in sorted {
        h.update(r.student_id.as_bytes());
        h.update(b"\x1f");
        h.update(r.question_id.as_bytes());
        h.update(b"\x1f");
        h.update(r.timestamp.timestamp_micros().to_le_bytes());
        h.update(r.duration.to_bits().to_le_bytes());
        h.update([u8::from(r.correct), r.mode as u8, r.difficulty as u8]);
        for o in r.objectives.iter() {
            h.update(o.as_str().as_bytes());
            h.update(b"\x1e");
        }
        h.update(b"\n");
    }
    h.update(b"--catalog--\n");
    h.update(serde_json::to_vec(catalog)?);
    h.update(b"--settings--\n");
    h.update(serde_json::to_vec(settings)?);
    Ok(hex(&h.finalize()))
}

/// Shared state for building many entries from one record set: schemes,
/// catalog and cohort statistics are computed once.
pub struct AggregationContext<'a> {
    graph: &'a ObjectiveGraph,
    records: &'a [AttemptRecord],
    catalog: QuestionCatalog,
    settings: AggregationSettings,
    schemes: SchemeSet,
    input_hash: String,
    cohort_all: Option<CohortStats>,
    by_student: BTreeMap<&'a str, Vec<&'a AttemptRecord>>,
}

impl<'a> AggregationContext<'a> {
    /// `catalog` supplements the questions seen in `records`.
    pub fn new(
        graph: &'a ObjectiveGraph,
        records: &'a [AttemptRecord],
        catalog: Option<&QuestionCatalog>,
        settings: AggregationSettings,
    ) -> Result<Self> {
        settings.reward_weights.validate()?;
        crate::model::validate_records(records, graph)?;
        let mut full = catalog.cloned().unwrap_or_default();
        full.absorb_records(records)?;
        let schemes = SchemeSet::fit(
            records,
            graph,
            settings.interval_width_days,
            settings.origin,
            settings.intervals,
        )?;
        let input_hash = input_hash(graph, records, &full, &settings)?;
        let cohort_all = match settings.cohort_scope {
            CohortScope::All => Some(build_cohort_stats(records, &schemes, graph, &settings.reward_weights)?),
            CohortScope::Students(_) => None,
        };
        let mut by_student: BTreeMap<&str, Vec<&AttemptRecord>> = BTreeMap::new();
        for r in records {
            by_student.entry(&r.student_id).or_default().push(r);
        }
        Ok(AggregationContext {
            graph,
            records,
            catalog: full,
            settings,
            schemes,
            input_hash,
            cohort_all,
            by_student,
        })
    }

    pub fn input_hash(&self) -> &str {
        &self.input_hash
    }

    pub fn students(&self) -> impl Iterator<Item = &str> + '_ {
        self.by_student.keys().copied()
    }

    pub fn catalog(&self) -> &QuestionCatalog {
        &self.catalog
    }

    pub fn schemes(&self) -> &SchemeSet {
        &self.schemes
    }

    /// Builds the entry for one student and unit. Pure: equal inputs give
    /// equal entries.
    pub fn refresh(&self, student_id: &str, unit_id: &str) -> Result<CacheEntry> {
        let graph = self.graph;
        let unit = graph.unit(unit_id)?;
        let mine: Vec<AttemptRecord> = self
            .by_student
            .get(student_id)
            .map(|v| v.iter().map(|r| (*r).clone()).collect())
            .unwrap_or_default();

        let cohort = match &self.cohort_all {
            Some(c) => c.clone(),
            None => {
                let scoped: Vec<AttemptRecord> = self
                    .records
                    .iter()
                    .filter(|r| self.settings.cohort_scope.admits(&r.student_id, student_id))
                    .cloned()
                    .collect();
                build_cohort_stats(&scoped, &self.schemes, graph, &self.settings.reward_weights)?
            }
        };

        let mut series = Vec::new();
        let mut push_all = |target: SeriesTarget, scheme_unit: &str| -> Result<()> {
            let scheme = self.schemes.for_unit(scheme_unit)?;
            for mode in ModeFilter::ALL {
                let subject = SeriesSubject {
                    student_id: student_id.to_owned(),
                    target: target.clone(),
                    mode,
                };
                series.push(crate::aggregation::build_series(&mine, scheme, &subject, graph)?);
            }
            Ok(())
        };
        for obj in graph.objectives() {
            push_all(SeriesTarget::Objective { id: obj.id.clone() }, &obj.unit_id)?;
        }
        for u in graph.units() {
            push_all(SeriesTarget::Unit { unit_id: u.id.clone() }, &u.id)?;
        }
        let mut associated = BTreeMap::new();
        let mut seen_sets = BTreeSet::new();
        for obj in &unit.objectives {
            let sets = associated_sets(&mine, graph, obj)?;
            for s in &sets {
                if seen_sets.insert(s.objectives.clone()) {
                    push_all(
                        SeriesTarget::Set {
                            objectives: s.objectives.clone(),
                        },
                        unit_id,
                    )?;
                }
            }
            associated.insert(obj.clone(), sets);
        }

        let mut breakdowns: BTreeMap<ObjectiveId, DifficultyBreakdown> = graph
            .objectives()
            .map(|o| (o.id.clone(), DifficultyBreakdown::default()))
            .collect();
        for r in &mine {
            for o in r.objectives.iter() {
                let in_window = self
                    .schemes
                    .for_objective(graph, o)?
                    .index_of(r.timestamp)
                    .is_some();
                if in_window {
                    breakdowns.get_mut(o).expect("validated").add(r.difficulty, r.correct);
                }
            }
        }

        let difficulty_profiles: BTreeMap<ObjectiveId, DifficultyProfile> = graph
            .objectives()
            .filter_map(|o| DifficultyProfile::from_catalog(&self.catalog, &o.id).map(|p| (o.id.clone(), p)))
            .collect();

        let indicators = graph
            .objectives()
            .map(|o| {
                let all = series
                    .iter()
                    .find(|s| s.subject.mode == ModeFilter::All && s.subject.target == SeriesTarget::Objective { id: o.id.clone() });
                (
                    o.id.clone(),
                    FormativeIndicators::compute(
                        difficulty_profiles.get(&o.id),
                        &breakdowns[&o.id],
                        all,
                        &self.settings.reward_weights,
                    ),
                )
            })
            .collect();

        let shares = share_table(&mine, graph, &self.schemes, unit_id)?;

        Ok(CacheEntry {
            version: CACHE_VERSION.to_owned(),
            student_id: student_id.to_owned(),
            unit_id: unit_id.to_owned(),
            input_hash: self.input_hash.clone(),
            settings: self.settings.clone(),
            schemes: self.schemes.clone(),
            series,
            breakdowns,
            difficulty_profiles,
            indicators,
            associated,
            shares,
            cohort,
        })
    }
}

fn share_table(
    records: &[AttemptRecord],
    graph: &ObjectiveGraph,
    schemes: &SchemeSet,
    unit_id: &str,
) -> Result<ShareTable> {
    let scheme = schemes.for_unit(unit_id)?;
    let mut table = ShareTable::default();
    for mode in ModeFilter::ALL {
        table.per_mode.insert(mode, ModeShare::default());
    }
    for r in records {
        let in_unit: Vec<&ObjectiveId> = r
            .objectives
            .iter()
            .filter(|o| graph.unit_of(o).is_ok_and(|u| u == unit_id))
            .collect();
        if in_unit.is_empty() || scheme.index_of(r.timestamp).is_none() {
            continue;
        }
        table.total += 1;
        let frac = 1.0 / in_unit.len() as f64;
        for mode in ModeFilter::ALL.into_iter().filter(|m| m.admits(r.mode)) {
            let share = table.per_mode.get_mut(&mode).unwrap();
            share.records += 1;
            for o in &in_unit {
                *share.objective_mass.entry((*o).clone()).or_default() += frac;
            }
        }
    }
    Ok(table)
}

/// One-shot refresh of a single entry.
pub fn refresh_cache(
    student_id: &str,
    unit_id: &str,
    records: &[AttemptRecord],
    graph: &ObjectiveGraph,
    catalog: Option<&QuestionCatalog>,
    settings: AggregationSettings,
) -> Result<CacheEntry> {
    AggregationContext::new(graph, records, catalog, settings)?.refresh(student_id, unit_id)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub version: String,
    pub entries: BTreeMap<String, IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub input_hash: String,
}

fn index_key(student: &str, unit: &str) -> String {
    format!("{student}/{unit}")
}

/// File-backed cache directory.
#[derive(Debug, Clone)]
pub struct CacheStore {
    dir: PathBuf,
}

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CacheStore { dir: dir.into() }
    }

    /// Opens an existing directory; fails if it is missing or unreadable.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let store = CacheStore::new(dir);
        fs::read_dir(&store.dir).map_err(|e| Error::storage(&store.dir, e))?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn index_path(&self) -> PathBuf {
        self.dir.join("index.json")
    }

    pub fn index(&self) -> Result<CacheIndex> {
        let path = self.index_path();
        match fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(CacheIndex {
                version: CACHE_VERSION.to_owned(),
                entries: BTreeMap::new(),
            }),
            Err(e) => Err(Error::storage(path, e)),
        }
    }

    /// Writes one entry and points the index at it.
    pub fn write(&self, entry: &CacheEntry) -> Result<PathBuf> {
        self.write_many(std::slice::from_ref(entry)).map(|mut v| v.remove(0))
    }

    /// Writes entries, then swaps in the updated index once.
    pub fn write_many(&self, entries: &[CacheEntry]) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::storage(&self.dir, e))?;
        let mut index = self.index()?;
        let mut paths = Vec::with_capacity(entries.len());
        for entry in entries {
            let body = entry.to_json()?;
            let digest = hex(&Sha256::digest(body.as_bytes()));
            let file = format!("entry-{}.json", &digest[..16]);
            let path = self.dir.join(&file);
            atomic_write(&path, body.as_bytes())?;
            index.entries.insert(
                index_key(&entry.student_id, &entry.unit_id),
                IndexEntry {
                    file,
                    input_hash: entry.input_hash.clone(),
                },
            );
            paths.push(path);
        }
        index.version = CACHE_VERSION.to_owned();
        atomic_write(&self.index_path(), serde_json::to_string_pretty(&index)?.as_bytes())?;
        Ok(paths)
    }

    pub fn read(&self, student: &str, unit: &str) -> Result<CacheEntry> {
        let index = self.index()?;
        let Some(item) = index.entries.get(&index_key(student, unit)) else {
            return Err(Error::MissingCache {
                student: student.to_owned(),
                unit: unit.to_owned(),
            });
        };
        let path = self.dir.join(&item.file);
        let text = fs::read_to_string(&path).map_err(|e| Error::storage(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// True when the indexed entry was built from different inputs.
    pub fn is_stale(&self, student: &str, unit: &str, current_input_hash: &str) -> Result<bool> {
        let index = self.index()?;
        Ok(index
            .entries
            .get(&index_key(student, unit))
            .is_none_or(|e| e.input_hash != current_input_hash))
    }

    /// Reads an entry and rejects it if it is stale.
    pub fn read_fresh(&self, student: &str, unit: &str, current_input_hash: &str) -> Result<CacheEntry> {
        let entry = self.read(student, unit)?;
        if entry.input_hash != current_input_hash {
            return Err(Error::StaleCache {
                student: student.to_owned(),
                unit: unit.to_owned(),
            });
        }
        Ok(entry)
    }
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::storage(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::storage(&tmp, e))?;
    f.sync_all().map_err(|e| Error::storage(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::storage(path, e))
}

// Keeps the accumulator type reachable for the cohort oracle in tests.
#[allow(dead_code)]
fn _accum_is_shared(a: &mut Accum, r: &AttemptRecord) {
    a.add(r);
}
