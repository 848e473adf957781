//! Selection-grounded questions about a report.
//!
//! A request names chart elements (registry ids such as `s8.you.S1205`) or
//! stage text spans (`stage:S6`) plus a free-text question. The selection
//! resolves to objectives, the question to an intent, and the answer is
//! composed from cached figures only: every number in the answer text is a
//! rendering of a value in the returned grounding slices.
//!
//! Intent rules, first match wins:
//!
//! | intent            | rule                                                                  |
//! |-------------------|-----------------------------------------------------------------------|
//! | WhyLowPerformance | "why" and one of: low, wrong, poor, weak                              |
//! | CompareToPeers    | compare, comparison, others, other students, peer(s), classmates,     |
//! |                   | class average, cohort, "than average", "the average student"          |
//! | ExplainSuggestion | "why" and one of: suggest, recommend, advice, advise, feedback        |
//! | ShowMetric        | show, how many, how much, average, display, what is my                |
//! | TrendOverTime     | over time, progress, history, trend, improv, week by week             |
//! | Unknown           | anything else                                                         |
//!
//! A bare "average" is a metric request; only the peer phrasings above
//! route to the comparison.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::aggregation::{Measure, SeriesPoint, SeriesTarget};
use crate::cache::CacheEntry;
use crate::chart::{Axis, ChartKind, ChartSpec, ElementTag};
use crate::config::{BackendMode, EngineConfig};
use crate::error::{Error, Result};
use crate::llm::{self, LlmClient};
use crate::model::{ModeFilter, ObjectiveGraph, ObjectiveId, ObjectiveSet};
use crate::pedagogy::FeedbackCategory;
use crate::provenance::{self, num, pct};
use crate::story::{graph_names, ReportDocument, StageId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRequest {
    #[serde(default)]
    pub report_id: String,
    pub selection: Vec<String>,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_hint: Option<ModeFilter>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    WhyLowPerformance,
    CompareToPeers,
    ExplainSuggestion,
    ShowMetric,
    TrendOverTime,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Current,
    Ancestor,
    Associated,
    Peer,
    Unit,
    Rule,
}

/// One cited figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSlice {
    pub label: String,
    pub level: Level,
    pub objectives: Vec<ObjectiveId>,
    pub metric: String,
    pub mode: ModeFilter,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub intent: Intent,
    /// Objectives the selection resolved to.
    pub selected: Vec<ObjectiveId>,
    /// Objectives the answer cites: selected ones plus any ancestors or
    /// co-tagged objectives that were drawn in.
    pub objectives: Vec<ObjectiveId>,
    pub slices: Vec<DataSlice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaResponse {
    pub answer: String,
    pub charts: Vec<ChartSpec>,
    pub grounding: Grounding,
    pub backend: BackendMode,
    /// Why a model answer was replaced by the deterministic one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub objectives: BTreeSet<ObjectiveId>,
    /// Set when the selection is exactly one unit-level element.
    pub unit_scope: Option<String>,
}

/// Maps selection ids to objectives. Unit elements carry all of the unit's
/// objectives; `stage:<id>` spans resolve to the stage's bound objectives.
pub fn resolve_selection(report: &ReportDocument, selection: &[String]) -> Result<Resolution> {
    if selection.is_empty() {
        return Err(Error::InvalidData("selection is empty".into()));
    }
    let mut objectives = BTreeSet::new();
    let mut unresolved = Vec::new();
    let mut units = Vec::new();
    for id in selection {
        if let Some(stage) = id.strip_prefix("stage:") {
            match StageId::parse(stage) {
                Some(s) => objectives.extend(report.stage(s).objectives.iter().cloned()),
                None => unresolved.push(id.clone()),
            }
        } else if let Some((_, _, tag)) = report.element(id) {
            objectives.extend(tag.objectives.iter().cloned());
            if id.starts_with("s1.unit.") {
                units.push(tag.unit_id.clone());
            }
        } else {
            unresolved.push(id.clone());
        }
    }
    if !unresolved.is_empty() {
        return Err(Error::UnresolvedSelection(unresolved));
    }
    let unit_scope = (selection.len() == 1 && units.len() == 1).then(|| units.remove(0));
    Ok(Resolution { objectives, unit_scope })
}

fn rules() -> &'static [(Intent, Regex)] {
    static RULES: OnceLock<Vec<(Intent, Regex)>> = OnceLock::new();
    RULES.get_or_init(|| {
        let r = |p: &str| Regex::new(p).expect("valid intent pattern");
        vec![
            (Intent::WhyLowPerformance, r(r"\bwhy\b.*\b(low|lower|wrong|poor|poorly|weak)\b")),
            (
                Intent::CompareToPeers,
                r(r"\b(compare|compared|comparison|others|other students|peers?|classmates|class average|cohort|than average|the average student)\b"),
            ),
            (Intent::ExplainSuggestion, r(r"\bwhy\b.*\b(suggest|suggested|suggestion|recommend|recommended|recommendation|advice|advise|feedback)\b")),
            (Intent::ShowMetric, r(r"\b(show|how many|how much|average|display|what is my)\b")),
            (Intent::TrendOverTime, r(r"(\bover time\b|\bprogress|\bhistory\b|\btrend|\bimprov|\bweek by week\b)")),
        ]
    })
}

pub fn classify_intent(question: &str) -> Intent {
    let q = question.to_lowercase();
    rules()
        .iter()
        .find(|(_, re)| re.is_match(&q))
        .map_or(Intent::Unknown, |(i, _)| *i)
}

/// Which figure a metric question asks about.
fn metric_of(question: &str) -> Measure {
    let q = question.to_lowercase();
    if q.contains("time") || q.contains("long") || q.contains("duration") || q.contains("second") {
        Measure::MeanDuration
    } else if q.contains("accura") || q.contains("score") || q.contains("percent") {
        Measure::Accuracy
    } else {
        Measure::Count
    }
}

fn solved_only(question: &str) -> bool {
    let q = question.to_lowercase();
    q.contains("solved") || q.contains("correct") || q.contains("right")
}

pub enum QaBackend<'a> {
    Deterministic,
    Llm(&'a dyn LlmClient),
}

struct Composer<'a> {
    entry: &'a CacheEntry,
    graph: &'a ObjectiveGraph,
    config: &'a EngineConfig,
    unit_id: String,
    mode: ModeFilter,
    slices: Vec<DataSlice>,
    cited: BTreeSet<ObjectiveId>,
    text: Vec<String>,
    charts: Vec<ChartSpec>,
}

impl Composer<'_> {
    fn slice(&mut self, level: Level, objectives: Vec<ObjectiveId>, metric: &str, mode: ModeFilter, value: f64) -> f64 {
        let key = objectives.iter().map(ObjectiveId::as_str).collect::<Vec<_>>().join("+");
        let label = if key.is_empty() {
            format!("{metric}:{}", mode.as_str())
        } else {
            format!("{metric}:{}:{key}", mode.as_str())
        };
        self.cited.extend(objectives.iter().cloned());
        if !self.slices.iter().any(|s| s.label == label) {
            self.slices.push(DataSlice {
                label,
                level,
                objectives,
                metric: metric.to_owned(),
                mode,
                value,
            });
        }
        value
    }

    fn total(&self, o: &ObjectiveId, mode: ModeFilter) -> Option<SeriesPoint> {
        self.entry
            .objective_series(o, mode)
            .map(|s| s.total())
            .filter(SeriesPoint::is_present)
    }

    fn tag(&self, objectives: Vec<ObjectiveId>, metric: &str) -> ElementTag {
        ElementTag {
            objectives,
            unit_id: self.unit_id.clone(),
            metric: metric.to_owned(),
        }
    }

    fn bar(&self, id: &str, title: &str, y: &str, rows: &[(ObjectiveId, Vec<(&str, f64)>)]) -> ChartSpec {
        let mut chart = ChartSpec::new(id, ChartKind::Bar, title, Axis::new("objective", None), Axis::new(y, None));
        let names: Vec<&str> = rows.first().map(|(_, v)| v.iter().map(|(n, _)| *n).collect()).unwrap_or_default();
        for (i, name) in names.iter().enumerate() {
            let slug = name.replace(' ', "_");
            chart.push_series(
                name,
                None,
                rows.iter().map(|(o, vals)| {
                    (
                        format!("{id}.{slug}.{o}"),
                        o.to_string(),
                        vals[i].1,
                        self.tag(vec![o.clone()], &format!("{y}:{slug}")),
                    )
                }),
            );
        }
        chart
    }
}

fn joined(objs: &[ObjectiveId]) -> String {
    let v: Vec<String> = objs.iter().map(|o| o.to_string()).collect();
    match v.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn why_low(c: &mut Composer, res: &Resolution, objs: &[ObjectiveId]) {
    let mode = c.mode;
    if let Some(u) = &res.unit_scope {
        if let Some(t) = c.entry.unit_series(u, mode).map(|s| s.total()).filter(SeriesPoint::is_present) {
            let title = c.graph.unit(u).map(|x| x.title.clone()).unwrap_or_else(|_| u.clone());
            let unit_objs: Vec<ObjectiveId> = objs.to_vec();
            let acc = c.slice(Level::Unit, unit_objs, "unit_accuracy", mode, t.accuracy.unwrap_or_default());
            c.text.push(format!("Overall you scored {} in {title}.", pct(acc)));
        }
    }
    let mut rows = Vec::new();
    let mut weakest: Option<(ObjectiveId, f64)> = None;
    for o in objs {
        let Some(t) = c.total(o, mode) else { continue };
        let acc = t.accuracy.unwrap_or_default();
        let m = c.entry.mastery(o).unwrap_or(acc);
        if weakest.as_ref().is_none_or(|(_, w)| m < *w) {
            weakest = Some((o.clone(), m));
        }
        let peer = c.entry.cohort.total(o, mode).map(|p| p.peer_mean_accuracy);
        rows.push((o.clone(), acc, peer, t.count, t.correct));
    }
    let Some((w, wm)) = weakest else {
        c.text.push(format!("There are no attempts on {} yet.", joined(objs)));
        return;
    };
    for (o, acc, peer, n, k) in &rows {
        let acc = c.slice(Level::Current, vec![o.clone()], "accuracy", mode, *acc);
        let n = c.slice(Level::Current, vec![o.clone()], "attempts", mode, *n as f64);
        let k = c.slice(Level::Current, vec![o.clone()], "correct", mode, *k as f64);
        let mut s = format!("On {o} you answered {} of {} correctly ({})", num(k, 0), num(n, 0), pct(acc));
        if let Some(p) = peer {
            let p = c.slice(Level::Peer, vec![o.clone()], "peer_accuracy", mode, *p);
            s.push_str(&format!(", while the class average is {}", pct(p)));
        }
        s.push('.');
        c.text.push(s);
    }
    let wm = c.slice(Level::Current, vec![w.clone()], "mastery", ModeFilter::All, wm);
    c.text.push(format!("Your weakest objective here is {w}, with {} mastery.", pct(wm)));

    let weak_ancestors: Vec<(ObjectiveId, f64)> = c
        .graph
        .ancestors(&w)
        .unwrap_or_default()
        .into_iter()
        .filter_map(|a| c.entry.mastery(&a).map(|m| (a, m)))
        .filter(|(_, m)| *m < c.config.ancestor_threshold)
        .take(c.config.ancestor_report_cap)
        .collect();
    for (a, m) in weak_ancestors {
        let m = c.slice(Level::Ancestor, vec![a.clone()], "mastery", ModeFilter::All, m);
        c.text.push(format!("{w} builds on {a}, where your mastery is {}.", pct(m)));
    }
    let sets: Vec<ObjectiveSet> = c
        .entry
        .associated
        .get(&w)
        .map(|v| v.iter().map(|s| s.objectives.clone()).collect())
        .unwrap_or_default();
    for set in sets {
        let target = SeriesTarget::Set { objectives: set.clone() };
        let Some(acc) = c.entry.series(&target, ModeFilter::All).and_then(|s| s.total().accuracy) else {
            continue;
        };
        if acc >= c.config.mastery_threshold {
            continue;
        }
        let members: Vec<ObjectiveId> = set.iter().cloned().collect();
        let others: Vec<ObjectiveId> = members.iter().filter(|m| **m != w).cloned().collect();
        let acc = c.slice(Level::Associated, members, "accuracy", ModeFilter::All, acc);
        c.text.push(format!(
            "{w} often appears alongside {} in questions, where your accuracy is {}.",
            joined(&others),
            pct(acc)
        ));
    }

    let chart_rows: Vec<(ObjectiveId, Vec<(&str, f64)>)> = rows
        .iter()
        .filter_map(|(o, a, p, _, _)| p.map(|p| (o.clone(), vec![("you", *a), ("class average", p)])))
        .collect();
    if !chart_rows.is_empty() {
        let chart = c.bar("qa.compare", "Your accuracy and the class average", "accuracy", &chart_rows);
        c.charts.push(chart);
    }
}

fn compare(c: &mut Composer, objs: &[ObjectiveId]) {
    let mode = c.mode;
    let mut chart_rows = Vec::new();
    for o in objs {
        let (Some(t), Some(p)) = (c.total(o, mode), c.entry.cohort.total(o, mode).cloned()) else {
            continue;
        };
        let acc = c.slice(Level::Current, vec![o.clone()], "accuracy", mode, t.accuracy.unwrap_or_default());
        let pa = c.slice(Level::Peer, vec![o.clone()], "peer_accuracy", mode, p.peer_mean_accuracy);
        let n = c.slice(Level::Current, vec![o.clone()], "attempts", mode, t.count as f64);
        let pn = c.slice(Level::Peer, vec![o.clone()], "peer_attempts", mode, p.peer_mean_count);
        let size = c.slice(Level::Peer, vec![o.clone()], "cohort_size", mode, p.cohort_size as f64);
        let side = if acc >= pa { "above" } else { "below" };
        c.text.push(format!(
            "On {o} your accuracy is {}, {side} the class average of {} across {} students; you made {} attempts against an average of {}.",
            pct(acc),
            pct(pa),
            num(size, 0),
            num(n, 0),
            num(pn, 1)
        ));
        chart_rows.push((o.clone(), vec![("you", acc), ("class average", pa)]));
    }
    if chart_rows.is_empty() {
        c.text.push(format!("There is no data to compare on {} yet.", joined(objs)));
        return;
    }
    let chart = c.bar("qa.compare", "You and the class", "accuracy", &chart_rows);
    c.charts.push(chart);
}

fn explain(c: &mut Composer, report: &ReportDocument, objs: &[ObjectiveId]) {
    let items: Vec<_> = report
        .feedback()
        .iter()
        .filter(|f| objs.contains(&f.objective))
        .cloned()
        .collect();
    if items.is_empty() {
        c.text.push(format!("The report makes no suggestion for {}.", joined(objs)));
        return;
    }
    let cfg = c.config;
    let mut rows = Vec::new();
    for f in &items {
        let o = &f.objective;
        for p in &f.provenance {
            let (level, subject) = match p.field.split_once(':') {
                Some(("ancestor_mastery", a)) => (Level::Ancestor, vec![ObjectiveId::new(a)]),
                Some(("associated_accuracy", set)) => (Level::Associated, set.split('+').map(ObjectiveId::new).collect()),
                _ if p.field.ends_with("_band") => (Level::Rule, Vec::new()),
                _ => (Level::Current, vec![o.clone()]),
            };
            let metric = p.field.split(':').next().unwrap_or(&p.field).to_owned();
            let mut slice_objs = subject;
            if slice_objs.is_empty() {
                slice_objs.push(o.clone());
            }
            c.slice(level, slice_objs, &metric, ModeFilter::All, p.value);
        }
        let mastery = c.entry.mastery(o);
        let reason = match (f.category, mastery) {
            (FeedbackCategory::Reinforce, Some(m)) => {
                let band = c.slice(Level::Rule, vec![o.clone()], "reinforce_band", ModeFilter::All, cfg.reinforce_band);
                let m = c.slice(Level::Current, vec![o.clone()], "mastery", ModeFilter::All, m);
                rows.push((o.clone(), vec![("mastery", m), ("target", band)]));
                format!(
                    "I suggested an extension challenge for {o} because your mastery is {}, at or above the {} mark.",
                    pct(m),
                    pct(band)
                )
            }
            (FeedbackCategory::MedalAndMission, Some(m)) => {
                let lo = c.slice(Level::Rule, vec![o.clone()], "medal_band", ModeFilter::All, cfg.medal_band);
                let hi = c.slice(Level::Rule, vec![o.clone()], "reinforce_band", ModeFilter::All, cfg.reinforce_band);
                let m = c.slice(Level::Current, vec![o.clone()], "mastery", ModeFilter::All, m);
                rows.push((o.clone(), vec![("mastery", m), ("target", hi)]));
                if f.demoted {
                    format!(
                        "I suggested a medal and a mission for {o}: your mastery of {} is high, but it has been slipping.",
                        pct(m)
                    )
                } else {
                    format!(
                        "I suggested a medal and a mission for {o} because your mastery is {}, between {} and {}.",
                        pct(m),
                        pct(lo),
                        pct(hi)
                    )
                }
            }
            (FeedbackCategory::Remediate, Some(m)) => {
                let lo = c.slice(Level::Rule, vec![o.clone()], "medal_band", ModeFilter::All, cfg.medal_band);
                let m = c.slice(Level::Current, vec![o.clone()], "mastery", ModeFilter::All, m);
                rows.push((o.clone(), vec![("mastery", m), ("target", lo)]));
                format!(
                    "I suggested a review for {o} because your mastery is {}, below the {} mark.",
                    pct(m),
                    pct(lo)
                )
            }
            _ => format!("I suggested a first try on {o} because there is no attempt on it yet."),
        };
        c.text.push(reason);
        c.text.push(format!("The suggestion reads: \"{}\"", f.slots.text()));
        if let Some(cause) = &f.cause {
            c.cited.extend(cause.objectives.iter().cloned());
        }
    }
    if !rows.is_empty() {
        let chart = c.bar("qa.gap", "The gap behind the suggestion", "mastery", &rows);
        c.charts.push(chart);
    }
}

fn measure_label(m: Measure, solved: bool) -> &'static str {
    match (m, solved) {
        (Measure::Count, true) => "problems solved",
        (Measure::Count, false) => "attempts",
        (Measure::MeanDuration, _) => "seconds per question",
        (Measure::Accuracy, _) => "accuracy",
    }
}

fn show_metric(c: &mut Composer, question: &str, objs: &[ObjectiveId]) {
    let mode = c.mode;
    let measure = metric_of(question);
    let solved = measure == Measure::Count && solved_only(question);
    let label = measure_label(measure, solved);
    let metric = label.replace(' ', "_");
    let fmt = |v: f64| match measure {
        Measure::Accuracy => pct(v),
        Measure::MeanDuration => num(v, 1),
        Measure::Count => num(v, 0),
    };
    let mut parts = Vec::new();
    let mut rows = Vec::new();
    for o in objs {
        let t = c.total(o, mode).unwrap_or_else(SeriesPoint::empty);
        let v = match measure {
            Measure::Count if solved => Some(t.correct as f64),
            Measure::Count => Some(t.count as f64),
            Measure::MeanDuration => t.mean_duration,
            Measure::Accuracy => t.accuracy,
        };
        let Some(v) = v else { continue };
        let v = c.slice(Level::Current, vec![o.clone()], &metric, mode, v);
        parts.push(format!("{o} {}", fmt(v)));
        rows.push((o.clone(), vec![(label, v)]));
    }
    if rows.is_empty() {
        c.text.push(format!("There is no data on {} yet.", joined(objs)));
        return;
    }
    c.text.push(format!("Your {label} per objective: {}.", parts.join(", ")));
    if rows.len() > 1 {
        let mean = rows.iter().map(|(_, v)| v[0].1).sum::<f64>() / rows.len() as f64;
        let mean = c.slice(Level::Current, objs.to_vec(), &format!("mean_{metric}_per_objective"), mode, mean);
        c.text.push(format!("That is an average of {} per objective.", num(mean, 2)));
    }
    if objs.len() > 1 {
        let set = ObjectiveSet::new(objs.iter().cloned());
        let joint = c
            .entry
            .series(&SeriesTarget::Set { objectives: set }, mode)
            .map(|s| s.total())
            .filter(SeriesPoint::is_present);
        if let Some(t) = joint {
            let n = c.slice(Level::Associated, objs.to_vec(), "joint_attempts", mode, t.count as f64);
            let a = c.slice(Level::Associated, objs.to_vec(), "joint_accuracy", mode, t.accuracy.unwrap_or_default());
            c.text.push(format!(
                "On the {} questions that combine them, your accuracy is {}.",
                num(n, 0),
                pct(a)
            ));
        }
    }
    let chart = c.bar("qa.metric", &format!("Your {label} per objective"), label, &rows);
    c.charts.push(chart);
}

fn trend(c: &mut Composer, objs: &[ObjectiveId]) {
    let mode = c.mode;
    let mut chart = ChartSpec::new(
        "qa.trend",
        ChartKind::Line,
        "Accuracy week by week",
        Axis::new("week", None),
        Axis::new("accuracy", Some("fraction")),
    );
    for o in objs {
        let Some(series) = c.entry.objective_series(o, mode) else { continue };
        let points = series.values(Measure::Accuracy);
        if points.is_empty() {
            continue;
        }
        let tag = c.tag(vec![o.clone()], "accuracy");
        chart.push_series(
            o.as_str(),
            Some("fraction"),
            points
                .iter()
                .map(|(k, v)| (format!("qa.trend.{o}.{k}"), format!("week {}", k + 1), *v, tag.clone())),
        );
        let velocity = if mode == ModeFilter::All {
            c.entry.indicators.get(o).and_then(|i| i.velocity)
        } else {
            crate::formative::learning_velocity(series)
        };
        match velocity {
            Some(v) => {
                let v = c.slice(Level::Current, vec![o.clone()], "velocity", mode, v);
                let dir = if v > 0.0 {
                    "rose"
                } else if v < 0.0 {
                    "fell"
                } else {
                    "held steady, changing"
                };
                c.text.push(format!(
                    "On {o} your accuracy {dir} by about {} percentage points per week.",
                    num(v.abs() * 100.0, 1)
                ));
            }
            None => {
                c.cited.insert(o.clone());
                c.text.push(format!("On {o} there is not enough data over time to see a trend yet."));
            }
        }
    }
    if chart.is_empty() {
        c.text.push(format!("There is no data over time on {} yet.", joined(objs)));
    } else {
        c.charts.push(chart);
    }
}

fn summary(c: &mut Composer, objs: &[ObjectiveId]) {
    let mut rows = Vec::new();
    c.text.push("Here is what your data shows for this selection.".into());
    for o in objs {
        let Some(t) = c.total(o, ModeFilter::All) else {
            c.cited.insert(o.clone());
            c.text.push(format!("{o}: no attempts yet."));
            continue;
        };
        let n = c.slice(Level::Current, vec![o.clone()], "attempts", ModeFilter::All, t.count as f64);
        let a = c.slice(Level::Current, vec![o.clone()], "accuracy", ModeFilter::All, t.accuracy.unwrap_or_default());
        let mut s = format!("{o}: {} attempts at {} accuracy", num(n, 0), pct(a));
        if let Some(m) = c.entry.mastery(o) {
            let m = c.slice(Level::Current, vec![o.clone()], "mastery", ModeFilter::All, m);
            s.push_str(&format!(", {} mastery", pct(m)));
            rows.push((o.clone(), vec![("mastery", m)]));
        }
        s.push('.');
        c.text.push(s);
    }
    if !rows.is_empty() {
        let chart = c.bar("qa.summary", "Mastery by objective", "mastery", &rows);
        c.charts.push(chart);
    }
}

/// Composes the deterministic answer. Reads only the report and the cache
/// entry.
fn deterministic(
    request: &QaRequest,
    report: &ReportDocument,
    entry: &CacheEntry,
    graph: &ObjectiveGraph,
    config: &EngineConfig,
) -> Result<(String, Vec<ChartSpec>, Grounding)> {
    let res = resolve_selection(report, &request.selection)?;
    let intent = classify_intent(&request.question);
    let objs: Vec<ObjectiveId> = res.objectives.iter().cloned().collect();
    let mut c = Composer {
        entry,
        graph,
        config,
        unit_id: res.unit_scope.clone().unwrap_or_else(|| entry.unit_id.clone()),
        mode: request.mode_hint.unwrap_or(ModeFilter::All),
        slices: Vec::new(),
        cited: BTreeSet::new(),
        text: Vec::new(),
        charts: Vec::new(),
    };
    match intent {
        Intent::WhyLowPerformance => why_low(&mut c, &res, &objs),
        Intent::CompareToPeers => compare(&mut c, &objs),
        Intent::ExplainSuggestion => explain(&mut c, report, &objs),
        Intent::ShowMetric => show_metric(&mut c, &request.question, &objs),
        Intent::TrendOverTime => trend(&mut c, &objs),
        Intent::Unknown => summary(&mut c, &objs),
    }
    let mut cited = c.cited;
    cited.extend(objs.iter().cloned());
    Ok((
        c.text.join(" "),
        c.charts,
        Grounding {
            intent,
            selected: objs,
            objectives: cited.into_iter().collect(),
            slices: c.slices,
        },
    ))
}

/// Shape of a model reply.
#[derive(Debug, Deserialize)]
struct ModelAnswer {
    answer: String,
    #[serde(default)]
    chart: Option<ChartSpec>,
}

pub fn qa_prompt(alias: &str, question: &str, grounding: &Grounding, draft: &str) -> String {
    let facts: Vec<String> = grounding
        .slices
        .iter()
        .map(|s| format!("- {} = {}", s.label, num(s.value, 4)))
        .collect();
    format!(
        "A learner ({alias}) asked about their report: \"{question}\"\n\
         Intent: {:?}. Verified figures:\n{}\n\
         Answer in a supportive second-person voice using only these figures, rendered as in the draft.\n\
         Reply as JSON: {{\"answer\": \"...\", \"chart\": null}}.\n{}\n{draft}\n{}",
        grounding.intent,
        facts.join("\n"),
        llm::DRAFT_START,
        llm::DRAFT_END
    )
}

/// Answers a question about a report from its cache entry.
pub fn answer(
    request: &QaRequest,
    report: &ReportDocument,
    entry: &CacheEntry,
    graph: &ObjectiveGraph,
    config: &EngineConfig,
    backend: &QaBackend,
) -> Result<QaResponse> {
    if request.question.trim().is_empty() {
        return Err(Error::EmptyQuestion);
    }
    if llm::student_token(&entry.student_id) != report.metadata.student_token || entry.unit_id != report.metadata.unit_id
    {
        return Err(Error::InvalidData("cache entry does not belong to this report".into()));
    }
    let (text, charts, grounding) = deterministic(request, report, entry, graph, config)?;
    let mut response = QaResponse {
        answer: text,
        charts,
        grounding,
        backend: BackendMode::Template,
        fallback: None,
    };
    if let QaBackend::Llm(client) = backend {
        response.backend = BackendMode::Llm;
        let alias = &report.metadata.student_token;
        let anonymizer = llm::Anonymizer::new([entry.student_id.as_str()]);
        let prompt = anonymizer.scrub(&qa_prompt(alias, &request.question, &response.grounding, &response.answer));
        let names = graph_names(graph);
        let allowed = provenance::allowed_numerals(response.grounding.slices.iter().map(|s| s.value));
        let verdict = client
            .complete(&prompt)
            .map_err(|e| format!("transport failure: {e}"))
            .and_then(|raw| serde_json::from_str::<ModelAnswer>(raw.trim()).map_err(|e| format!("unparseable reply: {e}")))
            .and_then(|m| {
                crate::story::check_reply(&m.answer, &response.answer, &allowed, &names, &[entry.student_id.as_str()])?;
                if let Some(chart) = &m.chart {
                    chart.validate(graph).map_err(|e| format!("invalid chart: {e}"))?;
                }
                Ok(m)
            });
        match verdict {
            Ok(m) => {
                response.answer = m.answer.trim().to_owned();
                if let Some(chart) = m.chart {
                    response.charts = vec![chart];
                }
            }
            Err(reason) => response.fallback = Some(reason),
        }
    }
    Ok(response)
}

/// Numerals in an answer that its grounding slices do not account for.
pub fn unsupported_numerals(response: &QaResponse, graph: &ObjectiveGraph) -> Vec<String> {
    let allowed = provenance::allowed_numerals(response.grounding.slices.iter().map(|s| s.value));
    provenance::unsupported_numerals(&response.answer, &allowed, &graph_names(graph))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intents() {
        assert_eq!(
            classify_intent("Why is my overall accuracy in Unit 3 so low?"),
            Intent::WhyLowPerformance
        );
        assert_eq!(
            classify_intent("How does my performance compare with other students?"),
            Intent::CompareToPeers
        );
        assert_eq!(classify_intent("Why did you suggest this?"), Intent::ExplainSuggestion);
        assert_eq!(
            classify_intent("What is the average number of problems solved per objective?"),
            Intent::ShowMetric
        );
        assert_eq!(classify_intent("How did I do over time?"), Intent::TrendOverTime);
        assert_eq!(classify_intent("asdf"), Intent::Unknown);
        assert_eq!(classify_intent("Am I better than average?"), Intent::CompareToPeers);
    }

    #[test]
    fn metric_words() {
        assert_eq!(metric_of("how long did each question take"), Measure::MeanDuration);
        assert_eq!(metric_of("show my accuracy"), Measure::Accuracy);
        assert_eq!(metric_of("average problems solved per objective"), Measure::Count);
        assert!(solved_only("average problems solved per objective"));
    }
}
