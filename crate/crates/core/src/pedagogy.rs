//! Rule-based feedback.
//!
//! Each diagnosis maps to one feedback item. The category depends only on
//! mastery and velocity:
//!
//! | mastery                     | category          |
//! |-----------------------------|-------------------|
//! | `>= reinforce_band`         | Reinforce         |
//! | `[medal_band, reinforce)`   | MedalAndMission   |
//! | `< medal_band`              | Remediate         |
//! | none                        | NotAssessed       |
//!
//! A velocity below `velocity_demotion` turns Reinforce into
//! MedalAndMission. Items are ordered Remediate, MedalAndMission, Reinforce,
//! NotAssessed, then by the unit's objective order.
//!
//! Prerequisite causes are phrased as "builds on"; co-occurrence causes only
//! as "often appears alongside", since sharing questions says nothing about
//! dependency.

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::formative::ObjectiveDiagnosis;
use crate::model::{ModeFilter, ObjectiveId, ObjectiveSet};
use crate::provenance::{num, pct};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackCategory {
    Remediate,
    MedalAndMission,
    Reinforce,
    NotAssessed,
}

impl FeedbackCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackCategory::Remediate => "remediate",
            FeedbackCategory::MedalAndMission => "medal_and_mission",
            FeedbackCategory::Reinforce => "reinforce",
            FeedbackCategory::NotAssessed => "not_assessed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tone {
    #[default]
    Supportive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseKind {
    Prerequisite,
    Association,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cause {
    pub kind: CauseKind,
    pub objectives: ObjectiveSet,
    /// Mastery of the prerequisite, or accuracy on the co-tagged questions.
    pub value: f64,
}

/// Distance from the current mastery to the next band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub metric: String,
    pub current: f64,
    pub target: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageSlots {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub praise: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    pub action: String,
}

impl MessageSlots {
    pub fn text(&self) -> String {
        [&self.praise, &self.gap, &self.cause]
            .into_iter()
            .flatten()
            .chain(std::iter::once(&self.action))
            .cloned()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A diagnosis field a rule read, with the value it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceField {
    pub field: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackItem {
    pub id: String,
    pub objective: ObjectiveId,
    pub category: FeedbackCategory,
    pub tone: Tone,
    /// Reinforce turned into MedalAndMission by a falling velocity.
    pub demoted: bool,
    pub slots: MessageSlots,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<Cause>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<Gap>,
    pub provenance: Vec<ProvenanceField>,
}

impl FeedbackItem {
    pub fn make_id(objective: &ObjectiveId) -> String {
        format!("feedback:{objective}")
    }
}

/// Category for a mastery/velocity pair; `(category, demoted)`.
pub fn categorize(mastery: Option<f64>, velocity: Option<f64>, config: &EngineConfig) -> (FeedbackCategory, bool) {
    match mastery {
        None => (FeedbackCategory::NotAssessed, false),
        Some(m) if m >= config.reinforce_band => {
            if velocity.is_some_and(|v| v < config.velocity_demotion) {
                (FeedbackCategory::MedalAndMission, true)
            } else {
                (FeedbackCategory::Reinforce, false)
            }
        }
        Some(m) if m >= config.medal_band => (FeedbackCategory::MedalAndMission, false),
        Some(_) => (FeedbackCategory::Remediate, false),
    }
}

fn field(name: &str, value: f64) -> ProvenanceField {
    ProvenanceField {
        field: name.to_owned(),
        value,
    }
}

fn weakest_cause(d: &ObjectiveDiagnosis, config: &EngineConfig) -> Option<Cause> {
    let ancestor = d
        .ancestors
        .iter()
        .filter_map(|a| a.mastery.map(|m| (a, m)))
        .filter(|(_, m)| *m < config.ancestor_threshold)
        .min_by(|(a, ma), (b, mb)| {
            ma.total_cmp(mb)
                .then(a.distance.cmp(&b.distance))
                .then(a.objective.cmp(&b.objective))
        });
    if let Some((a, m)) = ancestor {
        return Some(Cause {
            kind: CauseKind::Prerequisite,
            objectives: ObjectiveSet::new([a.objective.clone()]),
            value: m,
        });
    }
    d.associated
        .iter()
        .filter_map(|s| s.accuracy.map(|acc| (s, acc)))
        .filter(|(_, acc)| *acc < config.mastery_threshold)
        .min_by(|(a, x), (b, y)| x.total_cmp(y).then(a.objectives.cmp(&b.objectives)))
        .map(|(s, acc)| Cause {
            kind: CauseKind::Association,
            objectives: s.objectives.clone(),
            value: acc,
        })
}

fn others(set: &ObjectiveSet, current: &ObjectiveId) -> String {
    set.iter()
        .filter(|o| *o != current)
        .map(ObjectiveId::as_str)
        .collect::<Vec<_>>()
        .join(" and ")
}

fn feedback_for(d: &ObjectiveDiagnosis, config: &EngineConfig) -> FeedbackItem {
    let obj = &d.objective;
    let (category, demoted) = categorize(d.mastery, d.velocity, config);
    let mut slots = MessageSlots::default();
    let mut provenance = Vec::new();
    let mut cause = None;
    let mut gap = None;

    match (category, d.mastery) {
        (FeedbackCategory::Reinforce, Some(m)) => {
            provenance.push(field("mastery", m));
            slots.praise = Some(format!("You have a solid grasp of {obj} with {} mastery.", pct(m)));
            slots.action = format!("Take on hard-level questions on {obj} to stretch yourself further.");
        }
        (FeedbackCategory::MedalAndMission, Some(m)) => {
            provenance.push(field("mastery", m));
            let strongest = [ModeFilter::Test, ModeFilter::Exercise]
                .into_iter()
                .filter_map(|mode| d.mode(mode).and_then(|s| s.accuracy).map(|a| (mode, a)))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            slots.praise = Some(match strongest {
                Some((mode, acc)) => {
                    provenance.push(field(&format!("{}_accuracy", mode.as_str()), acc));
                    format!("Well done on {obj}: your {} accuracy reached {}.", mode.as_str(), pct(acc))
                }
                None => format!("Well done on {obj}: you reached {} mastery.", pct(m)),
            });
            if demoted {
                let v = d.velocity.unwrap_or_default();
                provenance.push(field("velocity", v));
                slots.gap = Some(format!(
                    "Your accuracy on {obj} has been slipping by about {} per week.",
                    num(v.abs(), 2)
                ));
                slots.action = format!("A short review session on {obj} will help you hold on to it.");
            } else {
                provenance.push(field("reinforce_band", config.reinforce_band));
                gap = Some(Gap {
                    metric: "mastery".into(),
                    current: m,
                    target: config.reinforce_band,
                    gap: config.reinforce_band - m,
                });
                slots.gap = Some(format!(
                    "Your mastery of {obj} is {}, close to the {} mark.",
                    pct(m),
                    pct(config.reinforce_band)
                ));
                slots.action = format!("Your mission: a few more medium-level questions on {obj} to close the gap.");
            }
        }
        (FeedbackCategory::Remediate, Some(m)) => {
            provenance.push(field("mastery", m));
            provenance.push(field("medal_band", config.medal_band));
            gap = Some(Gap {
                metric: "mastery".into(),
                current: m,
                target: config.medal_band,
                gap: config.medal_band - m,
            });
            slots.gap = Some(format!(
                "Your mastery of {obj} is {}, below the {} mark.",
                pct(m),
                pct(config.medal_band)
            ));
            cause = weakest_cause(d, config);
            match &cause {
                Some(c) if c.kind == CauseKind::Prerequisite => {
                    let a = c.objectives.key();
                    provenance.push(field(&format!("ancestor_mastery:{a}"), c.value));
                    slots.cause = Some(format!(
                        "{obj} builds on {a}, where your mastery is {}.",
                        pct(c.value)
                    ));
                    slots.action = format!("Revisiting {a} will help before you return to {obj}.");
                }
                Some(c) => {
                    let with = others(&c.objectives, obj);
                    provenance.push(field(&format!("associated_accuracy:{}", c.objectives.key()), c.value));
                    slots.cause = Some(format!(
                        "{obj} often appears alongside {with} in questions, where your accuracy is {}.",
                        pct(c.value)
                    ));
                    slots.action = format!("Practising questions that mix {obj} with {with} will help.");
                }
                None => {
                    slots.action = format!("Revisiting the basics of {obj} with easier questions will help.");
                }
            }
        }
        _ => {
            slots.action = format!("Try a first set of questions on {obj} so your progress can be tracked.");
        }
    }

    FeedbackItem {
        id: FeedbackItem::make_id(obj),
        objective: obj.clone(),
        category,
        tone: Tone::Supportive,
        demoted,
        slots,
        cause,
        gap,
        provenance,
    }
}

/// One feedback item per diagnosis, most urgent first.
pub fn generate_feedback(diagnoses: &[ObjectiveDiagnosis], config: &EngineConfig) -> Vec<FeedbackItem> {
    let mut items: Vec<(usize, FeedbackItem)> = diagnoses
        .iter()
        .enumerate()
        .map(|(i, d)| (i, feedback_for(d, config)))
        .collect();
    items.sort_by_key(|(i, f)| (f.category, *i));
    items.into_iter().map(|(_, f)| f).collect()
}
