//! Formative indicators and the tri-level diagnosis.
//!
//! Per objective: a potential reward from the difficulty mix of its
//! questions, a realized (difficulty-weighted) accuracy that doubles as the
//! mastery estimate, the incorrect-attempt rate and the learning velocity.
//! The diagnosis then looks at the objective itself, every ancestor in the
//! prerequisite graph, and the associated objective sets it is practised with.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregation::{DifficultyBreakdown, PerformanceSeries, SeriesTarget};
use crate::cache::CacheEntry;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::insight::{self, Insight, SubspaceTarget};
use crate::model::{AttemptRecord, Difficulty, ModeFilter, ObjectiveGraph, ObjectiveId, ObjectiveSet, QuestionCatalog};
use crate::stats;

/// Weights per difficulty level; harder never counts less.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub easy: f64,
    pub medium: f64,
    pub hard: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            easy: 1.0,
            medium: 2.0,
            hard: 3.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.easy > 0.0
            && self.easy.is_finite()
            && self.hard.is_finite()
            && self.easy <= self.medium
            && self.medium <= self.hard;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "reward weights must be positive and ordered easy <= medium <= hard, got {self:?}"
            )))
        }
    }

    pub fn weight(&self, d: Difficulty) -> f64 {
        match d {
            Difficulty::Easy => self.easy,
            Difficulty::Medium => self.medium,
            Difficulty::Hard => self.hard,
        }
    }

    /// `sum w(c) * correct(c) / sum w(c) * attempts(c)`; `None` without attempts.
    pub fn weighted_accuracy(&self, b: &DifficultyBreakdown) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for d in Difficulty::ALL {
            let (n, c) = b.get(d);
            num += self.weight(d) * c as f64;
            den += self.weight(d) * n as f64;
        }
        (den > 0.0).then(|| num / den)
    }
}

/// Share of an objective's questions at each difficulty level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyProfile {
    pub easy: f64,
    pub medium: f64,
    pub hard: f64,
    pub question_count: usize,
}

impl DifficultyProfile {
    pub fn from_catalog(catalog: &QuestionCatalog, obj: &ObjectiveId) -> Option<Self> {
        let mut counts = [0usize; 3];
        for q in catalog.tagged(obj) {
            counts[q.difficulty as usize] += 1;
        }
        let n: usize = counts.iter().sum();
        (n > 0).then(|| DifficultyProfile {
            easy: counts[0] as f64 / n as f64,
            medium: counts[1] as f64 / n as f64,
            hard: counts[2] as f64 / n as f64,
            question_count: n,
        })
    }

    pub fn share(&self, d: Difficulty) -> f64 {
        match d {
            Difficulty::Easy => self.easy,
            Difficulty::Medium => self.medium,
            Difficulty::Hard => self.hard,
        }
    }
}

/// Potential reward: `sum_level weight(level) * proportion(level)`.
pub fn reward_score(profile: &DifficultyProfile, config: &RewardConfig) -> f64 {
    Difficulty::ALL
        .iter()
        .map(|d| config.weight(*d) * profile.share(*d))
        .sum()
}

/// Difficulty-weighted accuracy over the given attempts; `None` when there
/// are none (objective not yet assessed).
pub fn actual_reward(attempts: &[AttemptRecord], config: &RewardConfig) -> Option<f64> {
    let mut b = DifficultyBreakdown::default();
    for a in attempts {
        b.add(a.difficulty, a.correct);
    }
    config.weighted_accuracy(&b)
}

/// Least-squares slope of accuracy against interval index over present
/// points; needs at least two.
pub fn learning_velocity(series: &PerformanceSeries) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .points
        .iter()
        .enumerate()
        .filter_map(|(k, p)| p.accuracy.map(|a| (k as f64, a)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    stats::ols_slope(&xs, &ys)
}

/// Per-objective indicators precomputed during aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormativeIndicators {
    pub reward_score: Option<f64>,
    pub actual_reward: Option<f64>,
    pub attempts: usize,
    pub errors: usize,
    pub error_rate: Option<f64>,
    pub velocity: Option<f64>,
}

impl FormativeIndicators {
    pub fn compute(
        profile: Option<&DifficultyProfile>,
        breakdown: &DifficultyBreakdown,
        all_mode: Option<&PerformanceSeries>,
        weights: &RewardConfig,
    ) -> Self {
        let total = all_mode.map(PerformanceSeries::total);
        let attempts = total.as_ref().map_or(0, |t| t.count);
        let errors = total.as_ref().map_or(0, |t| t.count - t.correct);
        FormativeIndicators {
            reward_score: profile.map(|p| reward_score(p, weights)),
            actual_reward: weights.weighted_accuracy(breakdown),
            attempts,
            errors,
            error_rate: (attempts > 0).then(|| errors as f64 / attempts as f64),
            velocity: all_mode.and_then(learning_velocity),
        }
    }
}

/// Student and peer figures for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub attempts: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub mean_duration: Option<f64>,
    pub peer_accuracy: Option<f64>,
    pub peer_mean_duration: Option<f64>,
    pub peer_mean_count: Option<f64>,
    pub cohort_size: usize,
}

/// Student minus peer mean, per indicator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeerDeltas {
    pub mastery: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_duration: Option<f64>,
    pub count: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncestorFinding {
    pub objective: ObjectiveId,
    pub distance: usize,
    pub mastery: Option<f64>,
    pub insights: Vec<Insight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociatedFinding {
    pub objectives: ObjectiveSet,
    pub attempts: usize,
    pub accuracy: Option<f64>,
    pub mean_duration: Option<f64>,
    pub insights: Vec<Insight>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttentionReason {
    LowMastery,
    NegativeVelocity,
    WeakAncestor { objective: ObjectiveId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveDiagnosis {
    pub objective: ObjectiveId,
    pub label: String,
    pub difficulty: Option<DifficultyProfile>,
    /// Potential reward from the question difficulty mix.
    pub reward_score: Option<f64>,
    /// Realized reward: difficulty-weighted accuracy.
    pub actual_reward: Option<f64>,
    /// Same value as `actual_reward`.
    pub mastery: Option<f64>,
    pub attempts: usize,
    pub error_count: usize,
    pub error_rate: Option<f64>,
    pub velocity: Option<f64>,
    pub modes: BTreeMap<ModeFilter, ModeSummary>,
    pub peer_deltas: PeerDeltas,
    pub insights: Vec<Insight>,
    pub ancestors: Vec<AncestorFinding>,
    pub associated: Vec<AssociatedFinding>,
    pub needs_attention: bool,
    pub attention: Vec<AttentionReason>,
}

impl ObjectiveDiagnosis {
    pub fn mode(&self, mode: ModeFilter) -> Option<&ModeSummary> {
        self.modes.get(&mode)
    }

    pub fn is_assessed(&self) -> bool {
        self.mastery.is_some()
    }
}

fn mode_summary(entry: &CacheEntry, obj: &ObjectiveId, mode: ModeFilter) -> ModeSummary {
    let total = entry
        .series(&SeriesTarget::Objective { id: obj.clone() }, mode)
        .map(PerformanceSeries::total);
    let peer = entry.cohort.total(obj, mode);
    ModeSummary {
        attempts: total.as_ref().map_or(0, |t| t.count),
        correct: total.as_ref().map_or(0, |t| t.correct),
        accuracy: total.as_ref().and_then(|t| t.accuracy),
        mean_duration: total.as_ref().and_then(|t| t.mean_duration),
        peer_accuracy: peer.map(|p| p.peer_mean_accuracy),
        peer_mean_duration: peer.map(|p| p.peer_mean_duration),
        peer_mean_count: peer.map(|p| p.peer_mean_count),
        cohort_size: peer.map_or(0, |p| p.cohort_size),
    }
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Tri-level diagnosis of every objective in the cached unit.
pub fn diagnose(
    student: &str,
    unit: &str,
    graph: &ObjectiveGraph,
    entry: Option<&CacheEntry>,
    config: &EngineConfig,
) -> Result<Vec<ObjectiveDiagnosis>> {
    let entry = entry
        .filter(|e| e.student_id == student && e.unit_id == unit)
        .ok_or_else(|| Error::MissingCache {
            student: student.to_owned(),
            unit: unit.to_owned(),
        })?;
    let detector = config.detector();
    let mastery_of = |id: &ObjectiveId| entry.indicators.get(id).and_then(|i| i.actual_reward);
    // Every distinct target is mined once, in parallel; the results are
    // independent of scheduling.
    let mut targets: BTreeMap<String, SubspaceTarget> = BTreeMap::new();
    for obj in &graph.unit(unit)?.objectives {
        for id in std::iter::once(obj.clone()).chain(graph.ancestors(obj)?) {
            let t = SubspaceTarget::Objective { id };
            targets.insert(t.key(), t);
        }
        for set in entry.associated.get(obj).map(Vec::as_slice).unwrap_or_default() {
            let t = SubspaceTarget::Set {
                objectives: set.objectives.clone(),
            };
            targets.insert(t.key(), t);
        }
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let keys: Vec<String> = targets.keys().cloned().collect();
    let mined = crate::llm::run_bounded(targets.into_values().collect(), workers, |t| {
        insight::mine_top_k(&insight::target_frame(entry, &t), config.top_k, &detector)
    });
    let memo: BTreeMap<String, Vec<Insight>> = keys.into_iter().zip(mined).collect();
    let mine = |target: SubspaceTarget| -> Vec<Insight> { memo.get(&target.key()).cloned().unwrap_or_default() };

    let mut out = Vec::new();
    for obj in &graph.unit(unit)?.objectives {
        let ind = entry
            .indicators
            .get(obj)
            .ok_or_else(|| Error::InvalidData(format!("cache entry lacks indicators for {obj}")))?;
        let mastery = ind.actual_reward;

        let insights = mine(SubspaceTarget::Objective { id: obj.clone() });

        let ancestor_ids = graph.ancestors(obj)?;
        let mut ancestors = Vec::with_capacity(ancestor_ids.len());
        let mut distance_of: BTreeMap<&ObjectiveId, usize> = BTreeMap::from([(obj, 0)]);
        for a in &ancestor_ids {
            let distance = graph
                .successors(a)?
                .iter()
                .filter_map(|s| distance_of.get(s))
                .min()
                .map_or(1, |d| d + 1);
            distance_of.insert(a, distance);
            ancestors.push(AncestorFinding {
                objective: a.clone(),
                distance,
                mastery: mastery_of(a),
                insights: mine(SubspaceTarget::Objective { id: a.clone() }),
            });
        }

        let associated = entry
            .associated
            .get(obj)
            .map(Vec::as_slice)
            .unwrap_or_default()
            .iter()
            .map(|set| {
                let target = SeriesTarget::Set {
                    objectives: set.objectives.clone(),
                };
                let total = entry.series(&target, ModeFilter::All).map(PerformanceSeries::total);
                AssociatedFinding {
                    objectives: set.objectives.clone(),
                    attempts: total.as_ref().map_or(0, |t| t.count),
                    accuracy: total.as_ref().and_then(|t| t.accuracy),
                    mean_duration: total.as_ref().and_then(|t| t.mean_duration),
                    insights: mine(SubspaceTarget::Set {
                        objectives: set.objectives.clone(),
                    }),
                }
            })
            .collect();

        let modes: BTreeMap<ModeFilter, ModeSummary> = ModeFilter::ALL
            .into_iter()
            .map(|m| (m, mode_summary(entry, obj, m)))
            .collect();
        let all = &modes[&ModeFilter::All];
        let peer_all = entry.cohort.total(obj, ModeFilter::All);
        let peer_deltas = PeerDeltas {
            mastery: delta(mastery, peer_all.map(|p| p.peer_mean_mastery)),
            accuracy: delta(all.accuracy, all.peer_accuracy),
            mean_duration: delta(all.mean_duration, all.peer_mean_duration),
            count: delta(
                (all.attempts > 0).then_some(all.attempts as f64),
                all.peer_mean_count,
            ),
        };

        let mut attention = Vec::new();
        if mastery.is_some_and(|m| m < config.mastery_threshold) {
            attention.push(AttentionReason::LowMastery);
        }
        if ind.velocity.is_some_and(|v| v < 0.0) {
            attention.push(AttentionReason::NegativeVelocity);
        }
        for a in &ancestors {
            if a.mastery.is_some_and(|m| m < config.ancestor_threshold) {
                attention.push(AttentionReason::WeakAncestor {
                    objective: a.objective.clone(),
                });
            }
        }

        out.push(ObjectiveDiagnosis {
            objective: obj.clone(),
            label: graph.objective(obj)?.label.clone(),
            difficulty: entry.difficulty_profiles.get(obj).cloned(),
            reward_score: ind.reward_score,
            actual_reward: mastery,
            mastery,
            attempts: ind.attempts,
            error_count: ind.errors,
            error_rate: ind.error_rate,
            velocity: ind.velocity,
            modes,
            peer_deltas,
            insights,
            ancestors,
            associated,
            needs_attention: !attention.is_empty(),
            attention,
        });
    }
    Ok(out)
}
