//! Domain vocabulary: learning objectives, the prerequisite graph, attempt
//! records and the question catalog, plus the graph queries every later stage
//! relies on.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque learning-objective code such as `S1102`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveId(String);

impl ObjectiveId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectiveId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectiveId {
    fn from(s: &str) -> Self {
        ObjectiveId(s.to_owned())
    }
}

impl std::borrow::Borrow<str> for ObjectiveId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A sorted, duplicate-free set of objectives, e.g. the tag set of a question.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveSet(BTreeSet<ObjectiveId>);

impl ObjectiveSet {
    pub fn new<I, T>(ids: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<ObjectiveId>,
    {
        ObjectiveSet(ids.into_iter().map(Into::into).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &ObjectiveId) -> bool {
        self.0.contains(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObjectiveId> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &ObjectiveSet) -> bool {
        self.0.is_subset(&other.0)
    }

    /// Stable textual id: members joined by `+` in lexicographic order.
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(ObjectiveId::as_str)
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl From<ObjectiveId> for ObjectiveSet {
    fn from(id: ObjectiveId) -> Self {
        ObjectiveSet(BTreeSet::from([id]))
    }
}

impl FromIterator<ObjectiveId> for ObjectiveSet {
    fn from_iter<I: IntoIterator<Item = ObjectiveId>>(iter: I) -> Self {
        ObjectiveSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningObjective {
    pub id: ObjectiveId,
    pub label: String,
    pub unit_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub title: String,
    pub objectives: Vec<ObjectiveId>,
}

/// On-disk graph document: units, objectives and prerequisite edges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub units: Vec<Unit>,
    pub objectives: Vec<LearningObjective>,
    pub edges: Vec<(ObjectiveId, ObjectiveId)>,
}

impl GraphDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidData(format!("graph document: {e}")))
    }
}

/// One structural problem found in a [`GraphDocument`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Cycle { members: Vec<ObjectiveId> },
    SelfEdge { objective: ObjectiveId },
    DanglingEdge { from: ObjectiveId, to: ObjectiveId, missing: ObjectiveId },
    DuplicateObjective { objective: ObjectiveId },
    DuplicateUnit { unit: String },
    OrphanObjective { objective: ObjectiveId },
    UnknownUnit { objective: ObjectiveId, unit: String },
    UnitMismatch { objective: ObjectiveId, declared: String, listed_in: String },
    MultipleUnits { objective: ObjectiveId },
    UnitListsUnknownObjective { unit: String, objective: ObjectiveId },
    EmptyObjectiveId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a graph document. Problems are returned as data; an empty report
/// means the document describes a valid prerequisite DAG.
pub fn validate_graph(doc: &GraphDocument) -> ValidationReport {
    let mut violations = Vec::new();

    let mut declared: BTreeMap<&ObjectiveId, &LearningObjective> = BTreeMap::new();
    for obj in &doc.objectives {
        if obj.id.as_str().is_empty() {
            violations.push(Violation::EmptyObjectiveId);
            continue;
        }
        if declared.insert(&obj.id, obj).is_some() {
            violations.push(Violation::DuplicateObjective {
                objective: obj.id.clone(),
            });
        }
    }

    let mut unit_ids = BTreeSet::new();
    for unit in &doc.units {
        if !unit_ids.insert(unit.id.as_str()) {
            violations.push(Violation::DuplicateUnit {
                unit: unit.id.clone(),
            });
        }
    }

    let mut membership: BTreeMap<&ObjectiveId, Vec<&str>> = BTreeMap::new();
    for unit in &doc.units {
        for id in &unit.objectives {
            if !declared.contains_key(id) {
                violations.push(Violation::UnitListsUnknownObjective {
                    unit: unit.id.clone(),
                    objective: id.clone(),
                });
            }
            membership.entry(id).or_default().push(&unit.id);
        }
    }

    for (id, obj) in &declared {
        if !unit_ids.contains(obj.unit_id.as_str()) {
            violations.push(Violation::UnknownUnit {
                objective: (*id).clone(),
                unit: obj.unit_id.clone(),
            });
        }
        match membership.get(id).map(Vec::as_slice) {
            None | Some([]) => violations.push(Violation::OrphanObjective {
                objective: (*id).clone(),
            }),
            Some([only]) => {
                if *only != obj.unit_id {
                    violations.push(Violation::UnitMismatch {
                        objective: (*id).clone(),
                        declared: obj.unit_id.clone(),
                        listed_in: (*only).to_owned(),
                    });
                }
            }
            Some(_) => violations.push(Violation::MultipleUnits {
                objective: (*id).clone(),
            }),
        }
    }

    // Kahn elimination over the well-formed edges; whatever survives sits on
    // or behind a cycle.
    let mut adjacency: BTreeMap<&ObjectiveId, BTreeSet<&ObjectiveId>> =
        declared.keys().map(|id| (*id, BTreeSet::new())).collect();
    for (from, to) in &doc.edges {
        let missing = [from, to].into_iter().find(|id| !declared.contains_key(id));
        if let Some(missing) = missing {
            violations.push(Violation::DanglingEdge {
                from: from.clone(),
                to: to.clone(),
                missing: missing.clone(),
            });
            continue;
        }
        if from == to {
            violations.push(Violation::SelfEdge {
                objective: from.clone(),
            });
            continue;
        }
        adjacency.entry(from).or_default().insert(to);
    }

    let remaining = kahn_remainder(&adjacency);
    if !remaining.is_empty() {
        for members in strongly_connected(&adjacency, &remaining) {
            if members.len() > 1 {
                violations.push(Violation::Cycle { members });
            }
        }
    }

    ValidationReport { violations }
}

fn kahn_remainder<'a>(
    adjacency: &BTreeMap<&'a ObjectiveId, BTreeSet<&'a ObjectiveId>>,
) -> BTreeSet<&'a ObjectiveId> {
    let mut indegree: BTreeMap<&ObjectiveId, usize> = adjacency.keys().map(|k| (*k, 0)).collect();
    for targets in adjacency.values() {
        for t in targets {
            *indegree.entry(t).or_default() += 1;
        }
    }
    let mut queue: VecDeque<&ObjectiveId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut remaining: BTreeSet<&ObjectiveId> = indegree.keys().copied().collect();
    while let Some(node) = queue.pop_front() {
        remaining.remove(node);
        for t in &adjacency[node] {
            let d = indegree.get_mut(t).expect("edge target indexed");
            *d -= 1;
            if *d == 0 {
                queue.push_back(t);
            }
        }
    }
    remaining
}

/// Tarjan's algorithm restricted to `nodes`; components come out with sorted
/// members, in order of their smallest member.
fn strongly_connected(
    adjacency: &BTreeMap<&ObjectiveId, BTreeSet<&ObjectiveId>>,
    nodes: &BTreeSet<&ObjectiveId>,
) -> Vec<Vec<ObjectiveId>> {
    struct State<'a> {
        index: BTreeMap<&'a ObjectiveId, usize>,
        low: BTreeMap<&'a ObjectiveId, usize>,
        stack: Vec<&'a ObjectiveId>,
        on_stack: BTreeSet<&'a ObjectiveId>,
        next: usize,
        out: Vec<Vec<ObjectiveId>>,
    }

    fn visit<'a>(
        v: &'a ObjectiveId,
        adjacency: &BTreeMap<&'a ObjectiveId, BTreeSet<&'a ObjectiveId>>,
        nodes: &BTreeSet<&'a ObjectiveId>,
        st: &mut State<'a>,
    ) {
        st.index.insert(v, st.next);
        st.low.insert(v, st.next);
        st.next += 1;
        st.stack.push(v);
        st.on_stack.insert(v);
        for w in &adjacency[v] {
            if !nodes.contains(w) {
                continue;
            }
            if !st.index.contains_key(w) {
                visit(w, adjacency, nodes, st);
                let lw = st.low[w];
                let lv = st.low.get_mut(v).unwrap();
                *lv = (*lv).min(lw);
            } else if st.on_stack.contains(w) {
                let iw = st.index[w];
                let lv = st.low.get_mut(v).unwrap();
                *lv = (*lv).min(iw);
            }
        }
        if st.low[v] == st.index[v] {
            let mut comp = Vec::new();
            while let Some(w) = st.stack.pop() {
                st.on_stack.remove(w);
                comp.push(w.clone());
                if w == v {
                    break;
                }
            }
            comp.sort();
            st.out.push(comp);
        }
    }

    let mut st = State {
        index: BTreeMap::new(),
        low: BTreeMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in nodes {
        if !st.index.contains_key(v) {
            visit(v, adjacency, nodes, &mut st);
        }
    }
    st.out.sort();
    st.out
}

/// A validated prerequisite DAG with unit grouping. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectiveGraph {
    units: Vec<Unit>,
    objectives: BTreeMap<ObjectiveId, LearningObjective>,
    edges: Vec<(ObjectiveId, ObjectiveId)>,
    predecessors: BTreeMap<ObjectiveId, BTreeSet<ObjectiveId>>,
    successors: BTreeMap<ObjectiveId, BTreeSet<ObjectiveId>>,
}

impl TryFrom<GraphDocument> for ObjectiveGraph {
    type Error = Error;

    fn try_from(doc: GraphDocument) -> Result<Self> {
        let report = validate_graph(&doc);
        if !report.is_valid() {
            return Err(Error::InvalidData(format!(
                "objective graph has {} violation(s): {}",
                report.violations.len(),
                serde_json::to_string(&report.violations)?
            )));
        }
        let objectives: BTreeMap<_, _> = doc
            .objectives
            .into_iter()
            .map(|o| (o.id.clone(), o))
            .collect();
        let mut predecessors: BTreeMap<ObjectiveId, BTreeSet<ObjectiveId>> =
            objectives.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
        let mut successors = predecessors.clone();
        let mut edges: Vec<_> = doc.edges.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        edges.sort();
        for (from, to) in &edges {
            predecessors.get_mut(to).unwrap().insert(from.clone());
            successors.get_mut(from).unwrap().insert(to.clone());
        }
        Ok(ObjectiveGraph {
            units: doc.units,
            objectives,
            edges,
            predecessors,
            successors,
        })
    }
}

impl ObjectiveGraph {
    pub fn from_json(text: &str) -> Result<Self> {
        GraphDocument::from_json(text)?.try_into()
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            units: self.units.clone(),
            objectives: self.objectives.values().cloned().collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn unit(&self, unit_id: &str) -> Result<&Unit> {
        self.units
            .iter()
            .find(|u| u.id == unit_id)
            .ok_or_else(|| Error::UnknownUnit(unit_id.to_owned()))
    }

    /// Units listed before `unit_id` in curriculum order.
    pub fn prior_units(&self, unit_id: &str) -> Result<&[Unit]> {
        let pos = self
            .units
            .iter()
            .position(|u| u.id == unit_id)
            .ok_or_else(|| Error::UnknownUnit(unit_id.to_owned()))?;
        Ok(&self.units[..pos])
    }

    pub fn objective(&self, id: &ObjectiveId) -> Result<&LearningObjective> {
        self.objectives
            .get(id)
            .ok_or_else(|| Error::UnknownObjective(id.to_string()))
    }

    pub fn contains(&self, id: &ObjectiveId) -> bool {
        self.objectives.contains_key(id)
    }

    pub fn objectives(&self) -> impl Iterator<Item = &LearningObjective> {
        self.objectives.values()
    }

    pub fn edges(&self) -> &[(ObjectiveId, ObjectiveId)] {
        &self.edges
    }

    pub fn unit_of(&self, id: &ObjectiveId) -> Result<&str> {
        Ok(self.objective(id)?.unit_id.as_str())
    }

    pub fn predecessors(&self, id: &ObjectiveId) -> Result<&BTreeSet<ObjectiveId>> {
        self.predecessors
            .get(id)
            .ok_or_else(|| Error::UnknownObjective(id.to_string()))
    }

    pub fn successors(&self, id: &ObjectiveId) -> Result<&BTreeSet<ObjectiveId>> {
        self.successors
            .get(id)
            .ok_or_else(|| Error::UnknownObjective(id.to_string()))
    }

    /// Transitive predecessors of `obj`, nearest first. Nodes at the same
    /// breadth-first distance are ordered by id.
    pub fn ancestors(&self, obj: &ObjectiveId) -> Result<Vec<ObjectiveId>> {
        self.predecessors(obj)?;
        let mut seen = BTreeSet::from([obj.clone()]);
        let mut out = Vec::new();
        let mut frontier = BTreeSet::from([obj.clone()]);
        while !frontier.is_empty() {
            let mut next = BTreeSet::new();
            for node in &frontier {
                for p in &self.predecessors[node] {
                    if seen.insert(p.clone()) {
                        next.insert(p.clone());
                    }
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        Ok(out)
    }

    /// Unit-level edges induced by objective edges that cross unit boundaries.
    pub fn unit_edges(&self) -> Vec<(String, String)> {
        let mut out = BTreeSet::new();
        for (from, to) in &self.edges {
            let (a, b) = (&self.objectives[from].unit_id, &self.objectives[to].unit_id);
            if a != b {
                out.insert((a.clone(), b.clone()));
            }
        }
        out.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    #[serde(alias = "Easy")]
    Easy,
    #[serde(alias = "Medium")]
    Medium,
    #[serde(alias = "Hard")]
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

/// Assessment mode of a single attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(alias = "Exercise")]
    Exercise,
    #[serde(alias = "Test")]
    Test,
}

/// Mode filter used by series and subspaces; `All` merges both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeFilter {
    Exercise,
    Test,
    All,
}

impl ModeFilter {
    pub const ALL: [ModeFilter; 3] = [ModeFilter::Exercise, ModeFilter::Test, ModeFilter::All];

    pub fn admits(self, mode: Mode) -> bool {
        matches!(
            (self, mode),
            (ModeFilter::All, _) | (ModeFilter::Exercise, Mode::Exercise) | (ModeFilter::Test, Mode::Test)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeFilter::Exercise => "exercise",
            ModeFilter::Test => "test",
            ModeFilter::All => "all",
        }
    }
}

/// One exercise or test attempt by one student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub student_id: String,
    pub question_id: String,
    pub timestamp: DateTime<Utc>,
    /// Seconds spent on the question.
    pub duration: f64,
    pub correct: bool,
    pub objectives: ObjectiveSet,
    pub difficulty: Difficulty,
    pub mode: Mode,
}

impl AttemptRecord {
    pub fn outcome(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

/// Parses newline-delimited JSON records. Blank lines are skipped.
pub fn read_records(reader: impl BufRead) -> Result<Vec<AttemptRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidData(format!("line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AttemptRecord = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidData(format!("line {}: {e}", lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Serializes records as newline-delimited JSON.
pub fn write_records(records: &[AttemptRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Checks records against the graph: known objectives, non-empty tag sets,
/// finite non-negative durations, non-empty identifiers.
pub fn validate_records(records: &[AttemptRecord], graph: &ObjectiveGraph) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        let at = || format!("record {} (student {}, question {})", i + 1, r.student_id, r.question_id);
        if r.student_id.is_empty() || r.question_id.is_empty() {
            return Err(Error::InvalidData(format!("{}: empty identifier", at())));
        }
        if !(r.duration.is_finite() && r.duration >= 0.0) {
            return Err(Error::InvalidData(format!("{}: invalid duration {}", at(), r.duration)));
        }
        if r.objectives.is_empty() {
            return Err(Error::InvalidData(format!("{}: no objectives", at())));
        }
        if let Some(unknown) = r.objectives.iter().find(|o| !graph.contains(o)) {
            return Err(Error::InvalidData(format!("{}: unknown objective {unknown}", at())));
        }
    }
    Ok(())
}

/// Canonical record order: timestamp, student, question, then mode.
pub fn normalize_records(records: &mut [AttemptRecord]) {
    records.sort_by(|a, b| {
        (a.timestamp, &a.student_id, &a.question_id, a.mode)
            .cmp(&(b.timestamp, &b.student_id, &b.question_id, b.mode))
    });
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionEntry {
    pub objectives: ObjectiveSet,
    pub difficulty: Difficulty,
}

/// Question bank keyed by question id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionCatalog {
    entries: BTreeMap<String, QuestionEntry>,
}

impl QuestionCatalog {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidData(format!("question catalog: {e}")))
    }

    pub fn insert(&mut self, question_id: impl Into<String>, entry: QuestionEntry) -> Result<()> {
        let question_id = question_id.into();
        match self.entries.get(&question_id) {
            Some(existing) if *existing != entry => Err(Error::InvalidData(format!(
                "question {question_id} has conflicting tags or difficulty"
            ))),
            Some(_) => Ok(()),
            None => {
                self.entries.insert(question_id, entry);
                Ok(())
            }
        }
    }

    /// Adds every question referenced by `records`; conflicting metadata for
    /// the same question id is an error.
    pub fn absorb_records(&mut self, records: &[AttemptRecord]) -> Result<()> {
        for r in records {
            self.insert(
                r.question_id.clone(),
                QuestionEntry {
                    objectives: r.objectives.clone(),
                    difficulty: r.difficulty,
                },
            )?;
        }
        Ok(())
    }

    pub fn from_records(records: &[AttemptRecord]) -> Result<Self> {
        let mut c = QuestionCatalog::default();
        c.absorb_records(records)?;
        Ok(c)
    }

    pub fn get(&self, question_id: &str) -> Option<&QuestionEntry> {
        self.entries.get(question_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &QuestionEntry)> {
        self.entries.iter()
    }

    /// Questions tagged with `obj`.
    pub fn tagged<'a>(&'a self, obj: &'a ObjectiveId) -> impl Iterator<Item = &'a QuestionEntry> + 'a {
        self.entries.values().filter(move |e| e.objectives.contains(obj))
    }
}

/// An associated objective set together with the number of attempts on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociatedSet {
    pub objectives: ObjectiveSet,
    pub attempts: usize,
}

/// Multi-objective tag sets that co-occur with `obj` on practised questions.
///
/// Sets containing any ancestor of `obj` are discarded, as are sets reaching
/// outside `obj`'s own unit. Ordered by attempt count descending, then by set
/// key.
pub fn associated_sets(
    records: &[AttemptRecord],
    graph: &ObjectiveGraph,
    obj: &ObjectiveId,
) -> Result<Vec<AssociatedSet>> {
    let ancestors: BTreeSet<ObjectiveId> = graph.ancestors(obj)?.into_iter().collect();
    let unit = graph.unit_of(obj)?;
    let mut counts: BTreeMap<&ObjectiveSet, usize> = BTreeMap::new();
    for r in records {
        let tags = &r.objectives;
        if tags.len() < 2 || !tags.contains(obj) {
            continue;
        }
        if tags.iter().any(|t| ancestors.contains(t)) {
            continue;
        }
        if tags.iter().any(|t| graph.unit_of(t).map_or(true, |u| u != unit)) {
            continue;
        }
        *counts.entry(tags).or_default() += 1;
    }
    let mut out: Vec<AssociatedSet> = counts
        .into_iter()
        .map(|(set, attempts)| AssociatedSet {
            objectives: set.clone(),
            attempts,
        })
        .collect();
    out.sort_by(|a, b| {
        b.attempts
            .cmp(&a.attempts)
            .then_with(|| a.objectives.key().cmp(&b.objectives.key()))
    });
    Ok(out)
}
