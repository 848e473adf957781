//! Twelve-stage report assembly.
//!
//! Planning binds upstream results (unit summaries, diagnoses, insights,
//! feedback) to stages; rendering turns each plan into narrative text and
//! charts. Narrative text comes from the template library in
//! `templates/narrative.json`, optionally rewritten by a language model
//! whose replies are accepted only if they keep every number of the draft
//! and add none.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::aggregation::Measure;
use crate::cache::CacheEntry;
use crate::chart::{Axis, ChartKind, ChartSpec, ElementTag};
use crate::config::{BackendMode, EngineConfig};
use crate::error::{Error, Result};
use crate::formative::{diagnose, ObjectiveDiagnosis};
use crate::insight::{self, Evidence, Insight, SubspaceTarget};
use crate::llm::{self, LlmClient};
use crate::model::{Difficulty, ModeFilter, ObjectiveGraph, ObjectiveId, Unit};
use crate::pedagogy::{generate_feedback, CauseKind, FeedbackCategory, FeedbackItem};
use crate::provenance::{self, num, pct, pct0};

pub const REPORT_SCHEMA: &str = "journey-report/1";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    S9,
    S10,
    S11,
    S12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Departure,
    Initiation,
    Unification,
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoGroup {
    OverviewIntro,
    SummaryInfo,
    FormativeGuidance,
}

impl StageId {
    pub const ALL: [StageId; 12] = [
        StageId::S1,
        StageId::S2,
        StageId::S3,
        StageId::S4,
        StageId::S5,
        StageId::S6,
        StageId::S7,
        StageId::S8,
        StageId::S9,
        StageId::S10,
        StageId::S11,
        StageId::S12,
    ];

    /// 1-based stage number.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn as_str(self) -> &'static str {
        ["S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9", "S10", "S11", "S12"][self as usize]
    }

    pub fn parse(s: &str) -> Option<StageId> {
        StageId::ALL.into_iter().find(|id| id.as_str().eq_ignore_ascii_case(s))
    }

    pub fn phase(self) -> Phase {
        match self.number() {
            1..=3 => Phase::Departure,
            4..=6 => Phase::Initiation,
            7..=9 => Phase::Unification,
            _ => Phase::Return,
        }
    }

    pub fn info_group(self) -> InfoGroup {
        match self.number() {
            1..=3 => InfoGroup::OverviewIntro,
            4..=9 => InfoGroup::SummaryInfo,
            _ => InfoGroup::FormativeGuidance,
        }
    }
}

impl std::fmt::Display for StageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTemplates {
    pub title: String,
    pub purpose: String,
    pub text: BTreeMap<String, String>,
}

/// Per-stage template library plus the language-model prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub version: String,
    pub stages: BTreeMap<StageId, StageTemplates>,
    #[serde(default)]
    pub prompt: String,
}

const BUILTIN_NARRATIVE: &str = include_str!("../templates/narrative.json");
const BUILTIN_PROMPT: &str = include_str!("../templates/prompt.txt");

impl Templates {
    pub fn builtin() -> &'static Templates {
        static T: OnceLock<Templates> = OnceLock::new();
        T.get_or_init(|| {
            let mut t = Templates::from_json(BUILTIN_NARRATIVE).expect("builtin templates parse");
            t.prompt = BUILTIN_PROMPT.to_owned();
            t
        })
    }

    /// Parses a narrative library; the prompt falls back to the builtin one.
    pub fn from_json(text: &str) -> Result<Templates> {
        let mut t: Templates = serde_json::from_str(text)?;
        if let Some(missing) = StageId::ALL.into_iter().find(|s| !t.stages.contains_key(s)) {
            return Err(Error::Config(format!("template library lacks stage {missing}")));
        }
        if t.prompt.is_empty() {
            t.prompt = BUILTIN_PROMPT.to_owned();
        }
        Ok(t)
    }

    pub fn title(&self, stage: StageId) -> &str {
        &self.stages[&stage].title
    }

    pub fn purpose(&self, stage: StageId) -> &str {
        &self.stages[&stage].purpose
    }

    /// Fills template `key` of `stage`; every placeholder must be bound.
    pub fn fill(&self, stage: StageId, key: &str, slots: &[(&str, String)]) -> Result<String> {
        let raw = self.stages[&stage]
            .text
            .get(key)
            .ok_or_else(|| Error::Config(format!("template {stage}.{key} is missing")))?;
        fill(raw, slots).map_err(|slot| Error::Config(format!("template {stage}.{key} has unbound slot {slot}")))
    }
}

fn fill(template: &str, slots: &[(&str, String)]) -> std::result::Result<String, String> {
    let mut out = template.to_owned();
    for (k, v) in slots {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    match (out.find('{'), out.find('}')) {
        (Some(a), Some(b)) if a < b => Err(out[a..=b].to_owned()),
        _ => Ok(out),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeTotals {
    pub attempts: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub mean_duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSummary {
    pub unit_id: String,
    pub title: String,
    pub objectives: Vec<ObjectiveId>,
    pub modes: BTreeMap<ModeFilter, ModeTotals>,
    pub peer_accuracy: Option<f64>,
}

impl UnitSummary {
    pub fn accuracy(&self) -> Option<f64> {
        self.modes.get(&ModeFilter::All).and_then(|m| m.accuracy)
    }

    pub fn attempts(&self) -> usize {
        self.modes.get(&ModeFilter::All).map_or(0, |m| m.attempts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalLabel {
    pub index: usize,
    /// 1-based week number shown to readers.
    pub week: usize,
    pub start: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRef {
    pub unit_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub unit: UnitSummary,
    pub prior_units: Vec<UnitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_unit: Option<UnitRef>,
    pub intervals: Vec<IntervalLabel>,
}

fn unit_summary(entry: &CacheEntry, unit: &Unit) -> UnitSummary {
    let modes = ModeFilter::ALL
        .into_iter()
        .map(|m| {
            let t = entry.unit_series(&unit.id, m).map(|s| s.total()).unwrap_or_else(crate::aggregation::SeriesPoint::empty);
            (
                m,
                ModeTotals {
                    attempts: t.count,
                    correct: t.correct,
                    accuracy: t.accuracy,
                    mean_duration: t.mean_duration,
                },
            )
        })
        .collect();
    UnitSummary {
        unit_id: unit.id.clone(),
        title: unit.title.clone(),
        objectives: unit.objectives.clone(),
        modes,
        peer_accuracy: entry.cohort.unit(&unit.id).map(|u| u.peer_mean_accuracy),
    }
}

pub fn summarize(entry: &CacheEntry, graph: &ObjectiveGraph) -> Result<ReportSummary> {
    let unit = graph.unit(&entry.unit_id)?;
    let scheme = entry.schemes.for_unit(&unit.id)?;
    let pos = graph.units().iter().position(|u| u.id == unit.id).unwrap_or(0);
    Ok(ReportSummary {
        unit: unit_summary(entry, unit),
        prior_units: graph
            .prior_units(&unit.id)?
            .iter()
            .map(|u| unit_summary(entry, u))
            .collect(),
        next_unit: graph.units().get(pos + 1).map(|u| UnitRef {
            unit_id: u.id.clone(),
            title: u.title.clone(),
        }),
        intervals: (0..scheme.count)
            .map(|k| IntervalLabel {
                index: k,
                week: k + 1,
                start: scheme.start_of(k).format("%Y-%m-%d").to_string(),
            })
            .collect(),
    })
}

/// Data bound to a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageContent {
    Transitional,
    PriorUnits {
        shown: Vec<String>,
        weakest: Option<String>,
        strongest: Option<String>,
    },
    UnitIntro {
        top_reward: Option<ObjectiveId>,
    },
    Challenge {
        hardest: Option<ObjectiveId>,
    },
    ExerciseIntro,
    ExerciseInsights {
        insights: Vec<Insight>,
        strongest: Option<ObjectiveId>,
    },
    TestResults {
        objectives: Vec<ObjectiveId>,
    },
    Mastery {
        best: ObjectiveId,
        worst: Option<ObjectiveId>,
    },
    Feedback {
        items: Vec<FeedbackItem>,
    },
    Close {
        missions: Vec<ObjectiveId>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: StageId,
    pub phase: Phase,
    pub info_group: InfoGroup,
    pub title: String,
    pub transitional: bool,
    /// Objectives a text selection on this stage resolves to.
    pub objectives: Vec<ObjectiveId>,
    pub content: StageContent,
}

fn diag_map(diagnoses: &[ObjectiveDiagnosis]) -> BTreeMap<&ObjectiveId, &ObjectiveDiagnosis> {
    diagnoses.iter().map(|d| (&d.objective, d)).collect()
}

fn subspace_objectives(target: &SubspaceTarget, unit: &[ObjectiveId]) -> Vec<ObjectiveId> {
    match target {
        SubspaceTarget::All => unit.to_vec(),
        other => other.objectives(),
    }
}

/// Binds upstream results to the twelve stages.
///
/// `exercise_insights` are the ranked summative insights for S6. An insight
/// id is bound to at most one stage.
pub fn plan_stages(
    summary: &ReportSummary,
    diagnoses: &[ObjectiveDiagnosis],
    exercise_insights: &[Insight],
    feedback: &[FeedbackItem],
    templates: &Templates,
    config: &EngineConfig,
) -> Vec<StagePlan> {
    let unit_objs = summary.unit.objectives.clone();
    let diags = diag_map(diagnoses);
    let mut used_insights: BTreeSet<String> = BTreeSet::new();
    let mut plans = Vec::with_capacity(12);

    for stage in StageId::ALL {
        let mut objectives = unit_objs.clone();
        let content = match stage {
            StageId::S1 => {
                let with_data: Vec<&UnitSummary> =
                    summary.prior_units.iter().filter(|u| u.accuracy().is_some()).collect();
                if with_data.is_empty() {
                    StageContent::Transitional
                } else {
                    let by_acc = |a: &&&UnitSummary, b: &&&UnitSummary| {
                        a.accuracy().unwrap_or(0.0).total_cmp(&b.accuracy().unwrap_or(0.0))
                    };
                    let weakest = with_data
                        .iter()
                        .filter(|u| u.accuracy().is_some_and(|a| a < config.mastery_threshold))
                        .min_by(by_acc)
                        .map(|u| u.unit_id.clone());
                    let strongest = with_data
                        .iter()
                        .filter(|u| Some(&u.unit_id) != weakest.as_ref())
                        .max_by(by_acc)
                        .map(|u| u.unit_id.clone());
                    objectives = with_data.iter().flat_map(|u| u.objectives.clone()).collect();
                    StageContent::PriorUnits {
                        shown: with_data.iter().map(|u| u.unit_id.clone()).collect(),
                        weakest,
                        strongest,
                    }
                }
            }
            StageId::S2 => StageContent::UnitIntro {
                top_reward: diagnoses
                    .iter()
                    .filter_map(|d| d.reward_score.map(|r| (d, r)))
                    .fold(None, |best: Option<(&ObjectiveDiagnosis, f64)>, (d, r)| match best {
                        Some((_, br)) if br >= r => best,
                        _ => Some((d, r)),
                    })
                    .map(|(d, _)| d.objective.clone()),
            },
            StageId::S3 => {
                if diagnoses.iter().all(|d| d.difficulty.is_none()) {
                    StageContent::Transitional
                } else {
                    StageContent::Challenge {
                        hardest: diagnoses
                            .iter()
                            .filter_map(|d| d.difficulty.as_ref().map(|p| (d, p.hard)))
                            .filter(|(_, h)| *h > 0.0)
                            .fold(None, |best: Option<(&ObjectiveDiagnosis, f64)>, (d, h)| match best {
                                Some((_, bh)) if bh >= h => best,
                                _ => Some((d, h)),
                            })
                            .map(|(d, _)| d.objective.clone()),
                    }
                }
            }
            StageId::S5 => {
                if summary.unit.modes[&ModeFilter::Exercise].attempts == 0 {
                    StageContent::Transitional
                } else {
                    StageContent::ExerciseIntro
                }
            }
            StageId::S6 => {
                let insights: Vec<Insight> = exercise_insights
                    .iter()
                    .filter(|i| used_insights.insert(i.id.clone()))
                    .cloned()
                    .collect();
                let strongest = diagnoses
                    .iter()
                    .filter(|d| d.mastery.is_some_and(|m| m >= config.medal_band))
                    .filter(|d| d.mode(ModeFilter::Exercise).is_some_and(|s| s.mean_duration.is_some()))
                    .fold(None, |best: Option<&ObjectiveDiagnosis>, d| match best {
                        Some(b) if b.mastery >= d.mastery => best,
                        _ => Some(d),
                    })
                    .map(|d| d.objective.clone());
                if insights.is_empty() && strongest.is_none() {
                    StageContent::Transitional
                } else {
                    let mut objs: BTreeSet<ObjectiveId> = insights
                        .iter()
                        .flat_map(|i| subspace_objectives(&i.subspace.target, &unit_objs))
                        .collect();
                    objs.extend(strongest.clone());
                    objectives = objs.into_iter().collect();
                    StageContent::ExerciseInsights { insights, strongest }
                }
            }
            StageId::S8 => {
                let tested: Vec<ObjectiveId> = unit_objs
                    .iter()
                    .filter(|o| {
                        diags
                            .get(o)
                            .and_then(|d| d.mode(ModeFilter::Test))
                            .is_some_and(|s| s.attempts > 0)
                    })
                    .cloned()
                    .collect();
                if tested.is_empty() {
                    StageContent::Transitional
                } else {
                    objectives = tested.clone();
                    StageContent::TestResults { objectives: tested }
                }
            }
            StageId::S9 => {
                let assessed: Vec<&ObjectiveDiagnosis> = diagnoses.iter().filter(|d| d.is_assessed()).collect();
                let best = assessed.iter().fold(None, |b: Option<&&ObjectiveDiagnosis>, d| match b {
                    Some(x) if x.mastery >= d.mastery => b,
                    _ => Some(d),
                });
                let worst = assessed.iter().fold(None, |b: Option<&&ObjectiveDiagnosis>, d| match b {
                    Some(x) if x.mastery <= d.mastery => b,
                    _ => Some(d),
                });
                match best {
                    None => StageContent::Transitional,
                    Some(best) => StageContent::Mastery {
                        best: best.objective.clone(),
                        worst: worst
                            .filter(|w| w.objective != best.objective)
                            .filter(|w| w.mastery.is_some_and(|m| m < config.reinforce_band))
                            .map(|w| w.objective.clone()),
                    },
                }
            }
            StageId::S11 => {
                if feedback.is_empty() {
                    StageContent::Transitional
                } else {
                    objectives = feedback.iter().map(|f| f.objective.clone()).collect();
                    StageContent::Feedback {
                        items: feedback.to_vec(),
                    }
                }
            }
            StageId::S12 => {
                let mut missions = Vec::new();
                for f in feedback.iter().filter(|f| f.category == FeedbackCategory::Remediate) {
                    if let Some(c) = f.cause.as_ref().filter(|c| c.kind == CauseKind::Prerequisite) {
                        missions.extend(c.objectives.iter().cloned());
                    }
                    missions.push(f.objective.clone());
                }
                let mut seen = BTreeSet::new();
                missions.retain(|m| seen.insert(m.clone()));
                if !missions.is_empty() {
                    objectives = missions.clone();
                }
                StageContent::Close { missions }
            }
            StageId::S4 | StageId::S7 | StageId::S10 => StageContent::Transitional,
        };
        plans.push(StagePlan {
            stage,
            phase: stage.phase(),
            info_group: stage.info_group(),
            title: templates.title(stage).to_owned(),
            transitional: content == StageContent::Transitional,
            objectives,
            content,
        });
    }
    plans
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub id: StageId,
    pub phase: Phase,
    pub info_group: InfoGroup,
    pub title: String,
    pub transitional: bool,
    pub narrative: String,
    pub objectives: Vec<ObjectiveId>,
    pub insights: Vec<Insight>,
    pub feedback: Vec<FeedbackItem>,
    pub charts: Vec<ChartSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFallback {
    pub stage: StageId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub schema: String,
    pub student_token: String,
    pub unit_id: String,
    pub unit_title: String,
    pub generated_at: String,
    pub engine_version: String,
    pub backend: BackendMode,
    pub template_version: String,
    pub input_hash: String,
    /// Stages whose model reply was rejected and replaced by the template.
    pub fallbacks: Vec<StageFallback>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidebarEntry {
    pub stage: StageId,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidebarGroup {
    pub info_group: InfoGroup,
    pub entries: Vec<SidebarEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub metadata: ReportMetadata,
    pub summary: ReportSummary,
    pub diagnoses: Vec<ObjectiveDiagnosis>,
    pub stages: Vec<Stage>,
    pub sidebar: Vec<SidebarGroup>,
}

impl ReportDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReportDocument = serde_json::from_str(text)?;
        if doc.metadata.schema != REPORT_SCHEMA {
            return Err(Error::InvalidData(format!(
                "report schema {} is not {REPORT_SCHEMA}",
                doc.metadata.schema
            )));
        }
        Ok(doc)
    }

    /// Serialization with the generation timestamp blanked, for comparisons.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.metadata.generated_at.clear();
        copy.to_json()
    }

    pub fn stage(&self, id: StageId) -> &Stage {
        &self.stages[id as usize]
    }

    pub fn insights(&self) -> impl Iterator<Item = &Insight> {
        self.stages.iter().flat_map(|s| s.insights.iter())
    }

    pub fn feedback(&self) -> &[FeedbackItem] {
        &self.stage(StageId::S11).feedback
    }

    /// Looks up a chart element by registry id.
    pub fn element(&self, element_id: &str) -> Option<(&Stage, &ChartSpec, &ElementTag)> {
        self.stages.iter().find_map(|s| {
            s.charts
                .iter()
                .find_map(|c| c.elements.get(element_id).map(|tag| (s, c, tag)))
        })
    }

    /// Numbers of the structured layer: summaries, diagnoses, and the
    /// insights and feedback embedded in stages.
    pub fn structured_numbers(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        provenance::collect_numbers(&serde_json::to_value(&self.summary)?, &mut out);
        provenance::collect_numbers(&serde_json::to_value(&self.diagnoses)?, &mut out);
        for s in &self.stages {
            provenance::collect_numbers(&serde_json::to_value(&s.insights)?, &mut out);
            provenance::collect_numbers(&serde_json::to_value(&s.feedback)?, &mut out);
        }
        Ok(out)
    }

    /// Numerals in stage narratives that the structured layer does not
    /// account for.
    pub fn audit_numerals(&self, graph: &ObjectiveGraph) -> Result<Vec<(StageId, String)>> {
        let allowed = provenance::allowed_numerals(self.structured_numbers()?);
        let names = graph_names(graph);
        Ok(self
            .stages
            .iter()
            .flat_map(|s| {
                provenance::unsupported_numerals(&s.narrative, &allowed, &names)
                    .into_iter()
                    .map(move |n| (s.id, n))
            })
            .collect())
    }

    /// Structural invariants: twelve ordered stages, the fixed phase and
    /// group layout, unique insight ids, valid charts.
    pub fn validate(&self, graph: &ObjectiveGraph) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidData(m));
        if self.stages.len() != 12 {
            return bad(format!("report has {} stages", self.stages.len()));
        }
        for (s, id) in self.stages.iter().zip(StageId::ALL) {
            if s.id != id || s.phase != id.phase() || s.info_group != id.info_group() {
                return bad(format!("stage {} is out of place", s.id));
            }
            if s.transitional && !s.charts.is_empty() {
                return bad(format!("transitional stage {} carries charts", s.id));
            }
            for c in &s.charts {
                c.validate(graph)?;
            }
        }
        let mut seen = BTreeSet::new();
        for i in self.insights() {
            if !seen.insert(&i.id) {
                return bad(format!("insight {} appears in two stages", i.id));
            }
        }
        Ok(())
    }
}

/// Names whose digits are not quantities: unit ids and titles, objective ids
/// and labels.
pub fn graph_names(graph: &ObjectiveGraph) -> Vec<String> {
    let mut names: Vec<String> = graph
        .units()
        .iter()
        .flat_map(|u| [u.id.clone(), u.title.clone()])
        .chain(graph.objectives().flat_map(|o| [o.id.to_string(), o.label.clone()]))
        .collect();
    names.sort();
    names.dedup();
    names
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn measure_name(m: Measure) -> &'static str {
    match m {
        Measure::Count => "number of attempts",
        Measure::MeanDuration => "time per question",
        Measure::Accuracy => "accuracy",
    }
}

fn measure_noun(m: Measure) -> &'static str {
    match m {
        Measure::Count => "attempts",
        Measure::MeanDuration => "time spent",
        Measure::Accuracy => "correct answers",
    }
}

fn fmt_value(m: Measure, v: f64) -> String {
    match m {
        Measure::Accuracy => pct(v),
        Measure::MeanDuration => format!("{} seconds", num(v, 0)),
        Measure::Count => num(v, 1),
    }
}

fn fmt_slope(m: Measure, v: f64) -> String {
    match m {
        Measure::Accuracy => format!("{} percentage points", num(v.abs() * 100.0, 1)),
        Measure::MeanDuration => format!("{} seconds", num(v.abs(), 1)),
        Measure::Count => format!("{} attempts", num(v.abs(), 1)),
    }
}

fn target_name(t: &SubspaceTarget) -> String {
    match t {
        SubspaceTarget::All => "the unit as a whole".to_owned(),
        SubspaceTarget::Objective { id } => id.to_string(),
        SubspaceTarget::Set { objectives } => format!("{} together", join_list(&objectives.iter().map(|o| o.to_string()).collect::<Vec<_>>())),
    }
}

fn week_of(summary: &ReportSummary, interval: usize) -> String {
    summary
        .intervals
        .get(interval)
        .map_or_else(|| (interval + 1).to_string(), |l| l.week.to_string())
}

fn insight_sentence(stage: StageId, i: &Insight, summary: &ReportSummary, t: &Templates) -> Result<String> {
    let m = i.subspace.measure;
    let target = ("target", target_name(&i.subspace.target));
    let measure = ("measure", measure_name(m).to_owned());
    match &i.evidence {
        Evidence::Trend { slope, .. } => {
            let key = if *slope >= 0.0 { "trend_up" } else { "trend_down" };
            t.fill(stage, key, &[target, measure, ("slope", fmt_slope(m, *slope))])
        }
        Evidence::ChangePoint {
            interval,
            mean_before,
            mean_after,
            ..
        } => t.fill(
            stage,
            "change_point",
            &[
                target,
                measure,
                ("week", week_of(summary, *interval)),
                ("before", fmt_value(m, *mean_before)),
                ("after", fmt_value(m, *mean_after)),
            ],
        ),
        Evidence::Outlier {
            interval, value, median, ..
        } => t.fill(
            stage,
            "outlier",
            &[
                target,
                measure,
                ("week", week_of(summary, *interval)),
                ("value", fmt_value(m, *value)),
                ("median", fmt_value(m, *median)),
            ],
        ),
        Evidence::LowVariance { mean, .. } => {
            t.fill(stage, "low_variance", &[target, measure, ("mean", fmt_value(m, *mean))])
        }
        Evidence::Majority { dominant, share } => t.fill(
            stage,
            "majority",
            &[
                target,
                ("dominant", dominant.to_string()),
                ("share", pct(*share)),
                ("noun", measure_noun(m).to_owned()),
            ],
        ),
    }
}

/// Everything rendering needs besides the plan.
pub struct RenderContext<'a> {
    pub graph: &'a ObjectiveGraph,
    pub entry: &'a CacheEntry,
    pub summary: &'a ReportSummary,
    pub diagnoses: &'a [ObjectiveDiagnosis],
    pub templates: &'a Templates,
    pub config: &'a EngineConfig,
}

fn tag(objectives: Vec<ObjectiveId>, unit_id: &str, metric: &str) -> ElementTag {
    ElementTag {
        objectives,
        unit_id: unit_id.to_owned(),
        metric: metric.to_owned(),
    }
}

/// Template narrative and charts for one planned stage.
pub fn render_stage(plan: &StagePlan, ctx: &RenderContext) -> Result<(String, Vec<ChartSpec>)> {
    let t = ctx.templates;
    let s = plan.stage;
    let diags = diag_map(ctx.diagnoses);
    let unit = &ctx.summary.unit;
    let uid = unit.unit_id.as_str();
    let mut text: Vec<String> = Vec::new();
    let mut charts = Vec::new();

    match &plan.content {
        StageContent::Transitional => {
            let key = match s {
                StageId::S1 | StageId::S3 | StageId::S5 | StageId::S8 | StageId::S9 | StageId::S11 => "empty",
                StageId::S6 => "quiet",
                _ => "transition",
            };
            text.push(t.fill(s, key, &[("unit_title", unit.title.clone())])?);
        }
        StageContent::PriorUnits {
            shown,
            weakest,
            strongest,
        } => {
            let by_id: BTreeMap<&str, &UnitSummary> =
                ctx.summary.prior_units.iter().map(|u| (u.unit_id.as_str(), u)).collect();
            let titles: Vec<String> = shown.iter().map(|id| by_id[id.as_str()].title.clone()).collect();
            text.push(t.fill(s, "intro", &[("prior_units", join_list(&titles))])?);
            if let Some(w) = weakest {
                let u = by_id[w.as_str()];
                text.push(t.fill(
                    s,
                    "weak",
                    &[
                        ("weak_unit", u.title.clone()),
                        ("weak_accuracy", pct0(u.accuracy().unwrap_or_default())),
                    ],
                )?);
            }
            if let Some(st) = strongest {
                let u = by_id[st.as_str()];
                text.push(t.fill(
                    s,
                    "strong",
                    &[
                        ("strong_unit", u.title.clone()),
                        ("strong_accuracy", pct0(u.accuracy().unwrap_or_default())),
                    ],
                )?);
            }
            let mut chart = ChartSpec::new(
                "s1.units",
                ChartKind::NodeLink,
                "Your units so far",
                Axis::new("unit", None),
                Axis::new("accuracy", Some("fraction")),
            );
            let nodes: Vec<&UnitSummary> = shown
                .iter()
                .map(|id| by_id[id.as_str()])
                .chain(unit.accuracy().is_some().then_some(unit))
                .collect();
            chart.push_series(
                "accuracy",
                Some("fraction"),
                nodes.iter().map(|u| {
                    (
                        format!("s1.unit.{}", u.unit_id),
                        u.title.clone(),
                        u.accuracy().unwrap_or_default(),
                        tag(u.objectives.clone(), &u.unit_id, "accuracy"),
                    )
                }),
            );
            let present: BTreeSet<&str> = nodes.iter().map(|u| u.unit_id.as_str()).collect();
            for (a, b) in ctx.graph.unit_edges() {
                if present.contains(a.as_str()) && present.contains(b.as_str()) {
                    chart.links.push(crate::chart::Link {
                        source: format!("s1.unit.{a}"),
                        target: format!("s1.unit.{b}"),
                    });
                }
            }
            if let Some(w) = weakest {
                chart.annotate(format!("s1.unit.{w}"), "worth another look");
            }
            charts.push(chart);
        }
        StageContent::UnitIntro { top_reward } => {
            text.push(t.fill(
                s,
                "intro",
                &[
                    ("unit_title", unit.title.clone()),
                    (
                        "objective_list",
                        join_list(&unit.objectives.iter().map(|o| o.to_string()).collect::<Vec<_>>()),
                    ),
                ],
            )?);
            if let Some(o) = top_reward {
                let r = diags[o].reward_score.unwrap_or_default();
                text.push(t.fill(s, "reward", &[("top_objective", o.to_string()), ("top_reward", num(r, 2))])?);
            }
            let mut chart = ChartSpec::new(
                "s2.reward",
                ChartKind::Bar,
                "Potential reward by objective",
                Axis::new("objective", None),
                Axis::new("reward score", None),
            );
            chart.push_series(
                "reward score",
                None,
                ctx.diagnoses.iter().filter_map(|d| {
                    d.reward_score.map(|r| {
                        (
                            format!("s2.reward.{}", d.objective),
                            d.objective.to_string(),
                            r,
                            tag(vec![d.objective.clone()], uid, "reward_score"),
                        )
                    })
                }),
            );
            if !chart.is_empty() {
                charts.push(chart);
            }
        }
        StageContent::Challenge { hardest } => {
            match hardest {
                Some(o) => {
                    let h = diags[o].difficulty.as_ref().map_or(0.0, |p| p.hard);
                    text.push(t.fill(s, "challenge", &[("hard_share", pct(h)), ("hard_objective", o.to_string())])?);
                }
                None => text.push(t.fill(s, "gentle", &[])?),
            }
            let mut chart = ChartSpec::new(
                "s3.difficulty",
                ChartKind::Bar,
                "Question difficulty by objective",
                Axis::new("objective", None),
                Axis::new("share of questions", Some("fraction")),
            );
            chart.stacked = true;
            for d in Difficulty::ALL {
                chart.push_series(
                    d.as_str(),
                    Some("fraction"),
                    ctx.diagnoses.iter().filter_map(|diag| {
                        diag.difficulty.as_ref().map(|p| {
                            (
                                format!("s3.{}.{}", d.as_str(), diag.objective),
                                diag.objective.to_string(),
                                p.share(d),
                                tag(vec![diag.objective.clone()], uid, &format!("{}_share", d.as_str())),
                            )
                        })
                    }),
                );
            }
            if let Some(o) = hardest {
                chart.annotate(format!("s3.hard.{o}"), "hardest mix");
            }
            charts.push(chart);
        }
        StageContent::ExerciseIntro => {
            let ex = &unit.modes[&ModeFilter::Exercise];
            text.push(t.fill(s, "intro", &[("exercise_attempts", ex.attempts.to_string())])?);
            if let Some(a) = ex.accuracy {
                text.push(t.fill(s, "accuracy", &[("exercise_accuracy", pct(a))])?);
            }
            let mut chart = ChartSpec::new(
                "s5.attempts",
                ChartKind::Pie,
                "Exercise attempts by objective",
                Axis::new("objective", None),
                Axis::new("attempts", Some("count")),
            );
            chart.push_series(
                "attempts",
                Some("count"),
                ctx.diagnoses.iter().filter_map(|d| {
                    d.mode(ModeFilter::Exercise).filter(|m| m.attempts > 0).map(|m| {
                        (
                            format!("s5.attempts.{}", d.objective),
                            d.objective.to_string(),
                            m.attempts as f64,
                            tag(vec![d.objective.clone()], uid, "exercise_attempts"),
                        )
                    })
                }),
            );
            charts.push(chart);
        }
        StageContent::ExerciseInsights { insights, strongest } => {
            text.push(t.fill(s, "intro", &[])?);
            for i in insights {
                text.push(insight_sentence(s, i, ctx.summary, t)?);
            }
            if let Some(o) = strongest {
                let d = diags[o];
                let dur = d.mode(ModeFilter::Exercise).and_then(|m| m.mean_duration).unwrap_or_default();
                text.push(t.fill(
                    s,
                    "strongest",
                    &[
                        ("objective", o.to_string()),
                        ("mastery", pct(d.mastery.unwrap_or_default())),
                        ("duration", num(dur, 0)),
                    ],
                )?);
            }
            let mut line = ChartSpec::new(
                "s6.insights",
                ChartKind::Line,
                "What your practice shows, week by week",
                Axis::new("week", None),
                Axis::new("value", None),
            );
            for (n, i) in insights.iter().enumerate() {
                if i.kind == insight::InsightKind::Majority {
                    continue;
                }
                let target = i.subspace.target.clone();
                let objs = subspace_objectives(&target, &unit.objectives);
                let series_target = match &target {
                    SubspaceTarget::All => crate::aggregation::SeriesTarget::Unit {
                        unit_id: uid.to_owned(),
                    },
                    SubspaceTarget::Objective { id } => crate::aggregation::SeriesTarget::Objective { id: id.clone() },
                    SubspaceTarget::Set { objectives } => crate::aggregation::SeriesTarget::Set {
                        objectives: objectives.clone(),
                    },
                };
                let Some(series) = ctx.entry.series(&series_target, i.subspace.mode) else {
                    continue;
                };
                let metric = i.subspace.measure.as_str();
                line.push_series(
                    &format!("{} of {}", measure_name(i.subspace.measure), target_name(&target)),
                    None,
                    series.values(i.subspace.measure).into_iter().map(|(k, v)| {
                        (
                            format!("s6.line.{n}.{k}"),
                            format!("week {}", week_of(ctx.summary, k)),
                            v,
                            tag(objs.clone(), uid, metric),
                        )
                    }),
                );
                let highlight = match i.evidence {
                    Evidence::Outlier { interval, .. } => Some((interval, "stand-out week")),
                    Evidence::ChangePoint { interval, .. } => Some((interval, "shift starts here")),
                    _ => None,
                };
                if let Some((k, note)) = highlight {
                    let id = format!("s6.line.{n}.{k}");
                    if line.elements.contains_key(&id) {
                        line.annotate(id, note);
                    }
                }
            }
            if !line.is_empty() {
                charts.push(line);
            }
            let mut bar = ChartSpec::new(
                "s6.accuracy",
                ChartKind::Bar,
                "Exercise accuracy by objective",
                Axis::new("objective", None),
                Axis::new("accuracy", Some("fraction")),
            );
            bar.push_series(
                "exercise accuracy",
                Some("fraction"),
                ctx.diagnoses.iter().filter_map(|d| {
                    d.mode(ModeFilter::Exercise).and_then(|m| m.accuracy).map(|a| {
                        (
                            format!("s6.accuracy.{}", d.objective),
                            d.objective.to_string(),
                            a,
                            tag(vec![d.objective.clone()], uid, "exercise_accuracy"),
                        )
                    })
                }),
            );
            if let Some(o) = strongest {
                let id = format!("s6.accuracy.{o}");
                if bar.elements.contains_key(&id) {
                    bar.annotate(id, "strongest objective");
                }
            }
            if !bar.is_empty() {
                charts.push(bar);
            }
        }
        StageContent::TestResults { objectives } => {
            text.push(t.fill(s, "intro", &[])?);
            for o in objectives {
                let m = diags[o].mode(ModeFilter::Test).expect("tested objective has a test summary");
                let acc = m.accuracy.unwrap_or_default();
                text.push(match m.peer_accuracy {
                    Some(p) => t.fill(s, "objective", &[("objective", o.to_string()), ("accuracy", pct(acc)), ("peer", pct(p))])?,
                    None => t.fill(s, "objective_alone", &[("objective", o.to_string()), ("accuracy", pct(acc))])?,
                });
            }
            if let Some(series) = ctx.entry.unit_series(uid, ModeFilter::Test) {
                let mut line = ChartSpec::new(
                    "s8.trend",
                    ChartKind::Line,
                    "Test accuracy by week",
                    Axis::new("week", None),
                    Axis::new("accuracy", Some("fraction")),
                );
                line.push_series(
                    "your test accuracy",
                    Some("fraction"),
                    series.values(Measure::Accuracy).into_iter().map(|(k, v)| {
                        (
                            format!("s8.line.{k}"),
                            format!("week {}", week_of(ctx.summary, k)),
                            v,
                            tag(unit.objectives.clone(), uid, "test_accuracy"),
                        )
                    }),
                );
                if !line.is_empty() {
                    charts.push(line);
                }
            }
            let mut bar = ChartSpec::new(
                "s8.compare",
                ChartKind::Bar,
                "Test accuracy: you and the class",
                Axis::new("objective", None),
                Axis::new("accuracy", Some("fraction")),
            );
            let rows: Vec<(ObjectiveId, f64, f64)> = objectives
                .iter()
                .filter_map(|o| {
                    let m = diags[o].mode(ModeFilter::Test)?;
                    Some((o.clone(), m.accuracy?, m.peer_accuracy?))
                })
                .collect();
            bar.push_series(
                "you",
                Some("fraction"),
                rows.iter().map(|(o, a, _)| {
                    (format!("s8.you.{o}"), o.to_string(), *a, tag(vec![o.clone()], uid, "test_accuracy"))
                }),
            );
            bar.push_series(
                "class average",
                Some("fraction"),
                rows.iter().map(|(o, _, p)| {
                    (format!("s8.peers.{o}"), o.to_string(), *p, tag(vec![o.clone()], uid, "peer_test_accuracy"))
                }),
            );
            if !bar.is_empty() {
                charts.push(bar);
            }
        }
        StageContent::Mastery { best, worst } => {
            text.push(t.fill(
                s,
                "best",
                &[("best", best.to_string()), ("best_mastery", pct(diags[best].mastery.unwrap_or_default()))],
            )?);
            if let Some(w) = worst {
                text.push(t.fill(
                    s,
                    "worst",
                    &[("worst", w.to_string()), ("worst_mastery", pct(diags[w].mastery.unwrap_or_default()))],
                )?);
            }
            let mut chart = ChartSpec::new(
                "s9.mastery",
                ChartKind::RadialProgress,
                "Mastery by objective",
                Axis::new("objective", None),
                Axis::new("mastery", Some("fraction")),
            );
            chart.push_series(
                "mastery",
                Some("fraction"),
                ctx.diagnoses.iter().filter_map(|d| {
                    d.mastery.map(|m| {
                        (
                            format!("s9.mastery.{}", d.objective),
                            d.objective.to_string(),
                            m,
                            tag(vec![d.objective.clone()], uid, "mastery"),
                        )
                    })
                }),
            );
            charts.push(chart);
        }
        StageContent::Feedback { items } => {
            text.push(t.fill(s, "intro", &[])?);
            text.extend(items.iter().map(|f| f.slots.text()));
            let mut chart = ChartSpec::new(
                "s11.gaps",
                ChartKind::Bar,
                "Where you stand and where to aim",
                Axis::new("objective", None),
                Axis::new("mastery", Some("fraction")),
            );
            let rows: Vec<(&FeedbackItem, f64, f64)> = items
                .iter()
                .filter_map(|f| {
                    let m = diags.get(&f.objective)?.mastery?;
                    let target = f.gap.as_ref().map_or(m, |g| g.target);
                    Some((f, m, target))
                })
                .collect();
            chart.push_series(
                "mastery",
                Some("fraction"),
                rows.iter().map(|(f, m, _)| {
                    (
                        format!("s11.feedback.{}", f.objective),
                        f.objective.to_string(),
                        *m,
                        tag(vec![f.objective.clone()], uid, "mastery"),
                    )
                }),
            );
            chart.push_series(
                "target",
                Some("fraction"),
                rows.iter().map(|(f, _, target)| {
                    (
                        format!("s11.target.{}", f.objective),
                        f.objective.to_string(),
                        *target,
                        tag(vec![f.objective.clone()], uid, "mastery_target"),
                    )
                }),
            );
            for (f, _, _) in &rows {
                if f.gap.is_some() {
                    chart.annotate(format!("s11.feedback.{}", f.objective), f.category.as_str());
                }
            }
            if !chart.is_empty() {
                charts.push(chart);
            }
        }
        StageContent::Close { missions } => {
            if missions.is_empty() {
                text.push(t.fill(s, "ready", &[("unit_title", unit.title.clone())])?);
            } else {
                let names: Vec<String> = missions.iter().map(|m| m.to_string()).collect();
                text.push(t.fill(s, "missions", &[("missions", join_list(&names))])?);
            }
            if let Some(next) = &ctx.summary.next_unit {
                text.push(t.fill(s, "next", &[("next_unit", next.title.clone())])?);
            }
        }
    }
    Ok((text.join(" "), charts))
}

/// How stage text is produced.
pub enum NarrativeBackend<'a> {
    Template,
    Llm {
        client: &'a dyn LlmClient,
        max_in_flight: usize,
    },
}

impl NarrativeBackend<'_> {
    pub fn mode(&self) -> BackendMode {
        match self {
            NarrativeBackend::Template => BackendMode::Template,
            NarrativeBackend::Llm { .. } => BackendMode::Llm,
        }
    }
}

/// Prompt for rewriting one stage draft.
pub fn stage_prompt(templates: &Templates, stage: StageId, alias: &str, draft: &str, numbers: &[String]) -> String {
    let numbers = if numbers.is_empty() {
        "there are none".to_owned()
    } else {
        numbers.join(", ")
    };
    let slots = [
        ("alias", alias.to_owned()),
        ("stage", stage.to_string()),
        ("title", templates.title(stage).to_owned()),
        ("purpose", templates.purpose(stage).to_owned()),
        ("numbers", numbers),
        ("draft", draft.to_owned()),
    ];
    let mut out = templates.prompt.clone();
    for (k, v) in slots {
        out = out.replace(&format!("{{{k}}}"), &v);
    }
    out
}

/// Checks a model reply against its draft; `Err` carries the reason.
pub fn check_reply(
    reply: &str,
    draft: &str,
    allowed: &BTreeSet<String>,
    names: &[String],
    forbidden: &[&str],
) -> std::result::Result<(), String> {
    let reply = reply.trim();
    if reply.is_empty() {
        return Err("empty reply".into());
    }
    if let Some(f) = forbidden.iter().find(|f| !f.is_empty() && reply.contains(*f)) {
        return Err(format!("reply contains identifier {f}"));
    }
    let got: BTreeSet<String> = provenance::extract_numerals(reply, names).into_iter().collect();
    let missing: Vec<String> = provenance::extract_numerals(draft, names)
        .into_iter()
        .filter(|n| !got.contains(n))
        .collect();
    if !missing.is_empty() {
        return Err(format!("reply dropped numbers: {}", missing.join(", ")));
    }
    let extra: Vec<&String> = got.iter().filter(|n| !allowed.contains(*n)).collect();
    if !extra.is_empty() {
        return Err(format!(
            "reply introduced numbers: {}",
            extra.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        ));
    }
    Ok(())
}

/// Per-request metadata.
pub struct ReportMeta<'a> {
    pub student_id: &'a str,
    pub generated_at: String,
}

/// Renders planned stages into a document.
pub fn render_report(
    plans: Vec<StagePlan>,
    ctx: &RenderContext,
    backend: &NarrativeBackend,
    meta: ReportMeta,
) -> Result<ReportDocument> {
    let alias = llm::student_token(meta.student_id);
    let mut stages = Vec::with_capacity(12);
    for plan in &plans {
        let (narrative, charts) = render_stage(plan, ctx)?;
        let (insights, feedback) = match &plan.content {
            StageContent::ExerciseInsights { insights, .. } => (insights.clone(), Vec::new()),
            StageContent::Feedback { items } => (Vec::new(), items.clone()),
            _ => (Vec::new(), Vec::new()),
        };
        stages.push(Stage {
            id: plan.stage,
            phase: plan.phase,
            info_group: plan.info_group,
            title: plan.title.clone(),
            transitional: plan.transitional,
            narrative,
            objectives: plan.objectives.clone(),
            insights,
            feedback,
            charts: if plan.transitional { Vec::new() } else { charts },
        });
    }

    let mut sidebar: Vec<SidebarGroup> = Vec::new();
    for s in &stages {
        match sidebar.last_mut() {
            Some(g) if g.info_group == s.info_group => {}
            _ => sidebar.push(SidebarGroup {
                info_group: s.info_group,
                entries: Vec::new(),
            }),
        }
        sidebar.last_mut().expect("group pushed").entries.push(SidebarEntry {
            stage: s.id,
            title: s.title.clone(),
        });
    }

    let mut doc = ReportDocument {
        metadata: ReportMetadata {
            schema: REPORT_SCHEMA.to_owned(),
            student_token: alias.clone(),
            unit_id: ctx.summary.unit.unit_id.clone(),
            unit_title: ctx.summary.unit.title.clone(),
            generated_at: meta.generated_at,
            engine_version: ENGINE_VERSION.to_owned(),
            backend: backend.mode(),
            template_version: ctx.templates.version.clone(),
            input_hash: ctx.entry.input_hash.clone(),
            fallbacks: Vec::new(),
        },
        summary: ctx.summary.clone(),
        diagnoses: ctx.diagnoses.to_vec(),
        stages,
        sidebar,
    };

    if let NarrativeBackend::Llm { client, max_in_flight } = backend {
        let allowed = provenance::allowed_numerals(doc.structured_numbers()?);
        let names = graph_names(ctx.graph);
        let anonymizer = llm::Anonymizer::new([meta.student_id]);
        let jobs: Vec<(usize, String, String)> = doc
            .stages
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.transitional)
            .map(|(i, s)| {
                let draft = s.narrative.clone();
                let numbers = provenance::extract_numerals(&draft, &names);
                let prompt = anonymizer.scrub(&stage_prompt(ctx.templates, s.id, &alias, &draft, &numbers));
                (i, draft, prompt)
            })
            .collect();
        let replies = llm::run_bounded(jobs, *max_in_flight, |(i, draft, prompt)| {
            let verdict = client
                .complete(&prompt)
                .map_err(|e| format!("transport failure: {e}"))
                .and_then(|reply| {
                    check_reply(&reply, &draft, &allowed, &names, &[meta.student_id]).map(|_| reply.trim().to_owned())
                });
            (i, verdict)
        });
        for (i, verdict) in replies {
            match verdict {
                Ok(text) => doc.stages[i].narrative = text,
                Err(reason) => doc.metadata.fallbacks.push(StageFallback {
                    stage: doc.stages[i].id,
                    reason,
                }),
            }
        }
    }
    Ok(doc)
}

/// Summative insights for S6: the top-k of the unit's exercise-mode frame.
pub fn exercise_insights(entry: &CacheEntry, graph: &ObjectiveGraph, config: &EngineConfig) -> Result<Vec<Insight>> {
    let frame = insight::unit_frame(entry, graph)?.restrict_modes(&[ModeFilter::Exercise]);
    Ok(insight::mine_top_k(&frame, config.top_k, &config.detector()))
}

/// Diagnosis, feedback, planning and rendering in one call.
pub fn generate_report(
    graph: &ObjectiveGraph,
    entry: &CacheEntry,
    config: &EngineConfig,
    backend: &NarrativeBackend,
    templates: &Templates,
    generated_at: impl Into<String>,
) -> Result<ReportDocument> {
    config.validate()?;
    let diagnoses = diagnose(&entry.student_id, &entry.unit_id, graph, Some(entry), config)?;
    let feedback = generate_feedback(&diagnoses, config);
    let insights = exercise_insights(entry, graph, config)?;
    let summary = summarize(entry, graph)?;
    let plans = plan_stages(&summary, &diagnoses, &insights, &feedback, templates, config);
    let ctx = RenderContext {
        graph,
        entry,
        summary: &summary,
        diagnoses: &diagnoses,
        templates,
        config,
    };
    render_report(
        plans,
        &ctx,
        backend,
        ReportMeta {
            student_id: &entry.student_id,
            generated_at: generated_at.into(),
        },
    )
}
