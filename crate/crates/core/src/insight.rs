//! Summative insight mining.
//!
//! Subspaces are the cartesian product of assessment mode, objective (or all
//! of a unit's objectives) and measure. Five detectors run over each subspace;
//! a candidate survives when its significance exceeds the configured floor and
//! is ranked by `significance * impact`, where impact is the share of the
//! student's records the subspace covers.
//!
//! Detector definitions:
//!
//! * **Trend**: Pearson `r` of value against interval index; significance is
//!   `1 - p` with `p` from a seeded permutation test on `|r|`.
//! * **ChangePoint**: the prefix/suffix split maximizing
//!   `|mean(prefix) - mean(suffix)| / pooled_sd`; significance from the same
//!   permutation test on the best-split statistic.
//! * **Outlier**: robust z `|x - median| / (1.4826 * MAD)` of the most extreme
//!   point, significance `1 - 2 * (1 - Phi(z))`. When the MAD is zero the scale
//!   falls back to `1.253314 * mean absolute deviation`; a constant series
//!   never yields an outlier.
//! * **LowVariance**: `cv = sd / mean` (population sd, mean > 0),
//!   significance `max(0, 1 - cv / 0.1)`.
//! * **Majority**: over the cross-objective totals of a (mode, measure) slice;
//!   fires with significance `s` when the dominant objective's share `s`
//!   exceeds one half.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::aggregation::{Measure, PerformanceSeries, SeriesTarget};
use crate::cache::CacheEntry;
use crate::error::Result;
use crate::model::{ModeFilter, ObjectiveGraph, ObjectiveId, ObjectiveSet};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsightKind {
    Majority,
    Outlier,
    Trend,
    ChangePoint,
    LowVariance,
}

impl InsightKind {
    pub const ALL: [InsightKind; 5] = [
        InsightKind::Majority,
        InsightKind::Outlier,
        InsightKind::Trend,
        InsightKind::ChangePoint,
        InsightKind::LowVariance,
    ];

    /// Kinds that run on a single time series.
    pub const SERIES: [InsightKind; 4] = [
        InsightKind::Outlier,
        InsightKind::Trend,
        InsightKind::ChangePoint,
        InsightKind::LowVariance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InsightKind::Majority => "majority",
            InsightKind::Outlier => "outlier",
            InsightKind::Trend => "trend",
            InsightKind::ChangePoint => "change_point",
            InsightKind::LowVariance => "low_variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubspaceTarget {
    All,
    Objective { id: ObjectiveId },
    Set { objectives: ObjectiveSet },
}

impl SubspaceTarget {
    pub fn key(&self) -> String {
        match self {
            SubspaceTarget::All => "all".to_owned(),
            SubspaceTarget::Objective { id } => id.to_string(),
            SubspaceTarget::Set { objectives } => objectives.key(),
        }
    }

    /// Objectives the target names explicitly.
    pub fn objectives(&self) -> Vec<ObjectiveId> {
        match self {
            SubspaceTarget::All => Vec::new(),
            SubspaceTarget::Objective { id } => vec![id.clone()],
            SubspaceTarget::Set { objectives } => objectives.iter().cloned().collect(),
        }
    }

    fn series_target(&self, unit_id: &str) -> SeriesTarget {
        match self {
            SubspaceTarget::All => SeriesTarget::Unit {
                unit_id: unit_id.to_owned(),
            },
            SubspaceTarget::Objective { id } => SeriesTarget::Objective { id: id.clone() },
            SubspaceTarget::Set { objectives } => SeriesTarget::Set {
                objectives: objectives.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subspace {
    pub mode: ModeFilter,
    pub target: SubspaceTarget,
    pub measure: Measure,
}

impl Subspace {
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.mode.as_str(), self.target.key(), self.measure.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Majority {
        dominant: ObjectiveId,
        share: f64,
    },
    Outlier {
        interval: usize,
        value: f64,
        median: f64,
        z: f64,
    },
    Trend {
        slope: f64,
        r: f64,
        p_value: f64,
    },
    ChangePoint {
        interval: usize,
        mean_before: f64,
        mean_after: f64,
        p_value: f64,
    },
    LowVariance {
        cv: f64,
        mean: f64,
    },
}

/// Detector output before impact weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightCore {
    pub kind: InsightKind,
    pub significance: f64,
    pub evidence: Evidence,
}

/// One point of the data an insight was computed from: an interval of a time
/// series or an objective's share in a breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPoint {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub interval: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub objective: Option<ObjectiveId>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub id: String,
    pub kind: InsightKind,
    pub subspace: Subspace,
    pub evidence: Evidence,
    pub significance: f64,
    pub impact: f64,
    pub score: f64,
    pub snapshot: Vec<SnapshotPoint>,
}

impl Insight {
    pub fn make_id(kind: InsightKind, subspace: &Subspace) -> String {
        format!("{}:{}", kind.as_str(), subspace.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Candidates need a significance strictly above this.
    pub floor: f64,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            floor: 0.8,
            permutations: 1000,
            seed: 7919,
        }
    }
}

/// Runs one series detector over `(interval, value)` pairs of present points.
/// Returns `None` when data is insufficient or significance does not clear
/// the floor. `Majority` never fires here; see [`detect_majority`].
pub fn detect(points: &[(usize, f64)], kind: InsightKind, cfg: &DetectorConfig) -> Option<InsightCore> {
    let core = match kind {
        InsightKind::Trend => trend(points, cfg),
        InsightKind::ChangePoint => change_point(points, cfg),
        InsightKind::Outlier => outlier(points),
        InsightKind::LowVariance => low_variance(points),
        InsightKind::Majority => None,
    }?;
    (core.significance > cfg.floor).then_some(core)
}

fn trend(points: &[(usize, f64)], cfg: &DetectorConfig) -> Option<InsightCore> {
    if points.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|(k, _)| *k as f64).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| *v).collect();
    let r = stats::pearson(&xs, &ys)?;
    let slope = stats::ols_slope(&xs, &ys)?;
    let p_value = stats::permutation_p_value(
        &ys,
        |perm| stats::pearson(&xs, perm).map_or(0.0, f64::abs),
        cfg.permutations,
        cfg.seed,
    );
    Some(InsightCore {
        kind: InsightKind::Trend,
        significance: 1.0 - p_value,
        evidence: Evidence::Trend { slope, r, p_value },
    })
}

fn change_point(points: &[(usize, f64)], cfg: &DetectorConfig) -> Option<InsightCore> {
    let ys: Vec<f64> = points.iter().map(|(_, v)| *v).collect();
    let (split, stat) = stats::best_split(&ys)?;
    if stat == 0.0 {
        return None;
    }
    let p_value = stats::permutation_p_value(
        &ys,
        |perm| stats::best_split(perm).map_or(0.0, |(_, s)| s),
        cfg.permutations,
        cfg.seed,
    );
    Some(InsightCore {
        kind: InsightKind::ChangePoint,
        significance: 1.0 - p_value,
        evidence: Evidence::ChangePoint {
            interval: points[split].0,
            mean_before: stats::mean(&ys[..split]),
            mean_after: stats::mean(&ys[split..]),
            p_value,
        },
    })
}

fn outlier(points: &[(usize, f64)]) -> Option<InsightCore> {
    if points.len() < 3 {
        return None;
    }
    let ys: Vec<f64> = points.iter().map(|(_, v)| *v).collect();
    let median = stats::median(&ys);
    let dev: Vec<f64> = ys.iter().map(|v| (v - median).abs()).collect();
    let mad = stats::median(&dev);
    let scale = if mad > 0.0 {
        1.4826 * mad
    } else {
        let mean_dev = stats::mean(&dev);
        if mean_dev == 0.0 {
            return None;
        }
        1.253_314 * mean_dev
    };
    let (idx, z) = dev
        .iter()
        .map(|d| d / scale)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, z)| if z > best.1 { (i, z) } else { best });
    let significance = (1.0 - stats::two_sided_tail(z)).clamp(0.0, 1.0);
    Some(InsightCore {
        kind: InsightKind::Outlier,
        significance,
        evidence: Evidence::Outlier {
            interval: points[idx].0,
            value: ys[idx],
            median,
            z,
        },
    })
}

fn low_variance(points: &[(usize, f64)]) -> Option<InsightCore> {
    if points.len() < 2 {
        return None;
    }
    let ys: Vec<f64> = points.iter().map(|(_, v)| *v).collect();
    let mean = stats::mean(&ys);
    if mean <= 0.0 {
        return None;
    }
    let cv = stats::std_dev(&ys) / mean;
    Some(InsightCore {
        kind: InsightKind::LowVariance,
        significance: (1.0 - cv / 0.1).max(0.0),
        evidence: Evidence::LowVariance { cv, mean },
    })
}

/// Majority over a breakdown of non-negative totals per objective. Needs at
/// least two objectives and a positive total.
pub fn detect_majority(shares: &[(ObjectiveId, f64)], cfg: &DetectorConfig) -> Option<InsightCore> {
    if shares.len() < 2 {
        return None;
    }
    let total: f64 = shares.iter().map(|(_, v)| v).sum();
    if total <= 0.0 {
        return None;
    }
    let (dominant, top) = shares
        .iter()
        .fold(None::<(&ObjectiveId, f64)>, |best, (id, v)| match best {
            Some((_, b)) if *v <= b => best,
            _ => Some((id, *v)),
        })?;
    let share = top / total;
    if share <= 0.5 || share <= cfg.floor {
        return None;
    }
    Some(InsightCore {
        kind: InsightKind::Majority,
        significance: share,
        evidence: Evidence::Majority {
            dominant: dominant.clone(),
            share,
        },
    })
}

/// A time series ready for mining.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub subspace: Subspace,
    pub points: Vec<(usize, f64)>,
    pub impact: f64,
}

/// Cross-objective totals of one (mode, measure) slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBreakdown {
    pub subspace: Subspace,
    pub totals: Vec<(ObjectiveId, f64)>,
    pub impact: f64,
}

/// Everything the miner looks at for one scope.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MiningFrame {
    pub series: Vec<FrameSeries>,
    pub breakdowns: Vec<FrameBreakdown>,
}

impl MiningFrame {
    pub fn restrict_modes(mut self, modes: &[ModeFilter]) -> Self {
        self.series.retain(|s| modes.contains(&s.subspace.mode));
        self.breakdowns.retain(|b| modes.contains(&b.subspace.mode));
        self
    }
}

/// All subspaces of a unit: modes × (unit objectives, then All) × measures.
pub fn enumerate_subspaces(graph: &ObjectiveGraph, unit_id: &str) -> Result<Vec<Subspace>> {
    let unit = graph.unit(unit_id)?;
    let targets: Vec<SubspaceTarget> = unit
        .objectives
        .iter()
        .map(|id| SubspaceTarget::Objective { id: id.clone() })
        .chain(std::iter::once(SubspaceTarget::All))
        .collect();
    let mut out = Vec::with_capacity(targets.len() * 9);
    for mode in ModeFilter::ALL {
        for target in &targets {
            for measure in Measure::ALL {
                out.push(Subspace {
                    mode,
                    target: target.clone(),
                    measure,
                });
            }
        }
    }
    Ok(out)
}

fn breakdown_value(series: &PerformanceSeries, measure: Measure) -> f64 {
    let total = series.total();
    match measure {
        Measure::Count => total.count as f64,
        Measure::MeanDuration => total.total_duration,
        Measure::Accuracy => total.correct as f64,
    }
}

/// Mining frame over the cached unit of `entry`.
pub fn unit_frame(entry: &CacheEntry, graph: &ObjectiveGraph) -> Result<MiningFrame> {
    let unit = graph.unit(&entry.unit_id)?;
    let mut frame = MiningFrame::default();
    for subspace in enumerate_subspaces(graph, &entry.unit_id)? {
        let target = subspace.target.series_target(&entry.unit_id);
        let points = entry
            .series(&target, subspace.mode)
            .map(|s| s.values(subspace.measure))
            .unwrap_or_default();
        let impact = entry.shares.impact(subspace.mode, &subspace.target);
        if subspace.target == SubspaceTarget::All {
            let totals = unit
                .objectives
                .iter()
                .filter_map(|id| {
                    entry
                        .series(&SeriesTarget::Objective { id: id.clone() }, subspace.mode)
                        .map(|s| (id.clone(), breakdown_value(s, subspace.measure)))
                })
                .collect();
            frame.breakdowns.push(FrameBreakdown {
                subspace: subspace.clone(),
                totals,
                impact,
            });
        }
        frame.series.push(FrameSeries {
            subspace,
            points,
            impact,
        });
    }
    Ok(frame)
}

/// Mining frame scoped to a single objective or objective set: modes ×
/// measures, with impact measured against the target's own records.
pub fn target_frame(entry: &CacheEntry, target: &SubspaceTarget) -> MiningFrame {
    let series_target = target.series_target(&entry.unit_id);
    let base = entry
        .series(&series_target, ModeFilter::All)
        .map_or(0, |s| s.total().count);
    let mut frame = MiningFrame::default();
    for mode in ModeFilter::ALL {
        let series = entry.series(&series_target, mode);
        let count = series.map_or(0, |s| s.total().count);
        let impact = if base == 0 { 0.0 } else { count as f64 / base as f64 };
        for measure in Measure::ALL {
            frame.series.push(FrameSeries {
                subspace: Subspace {
                    mode,
                    target: target.clone(),
                    measure,
                },
                points: series.map(|s| s.values(measure)).unwrap_or_default(),
                impact,
            });
        }
    }
    frame
}

fn finish(core: InsightCore, subspace: &Subspace, impact: f64, snapshot: Vec<SnapshotPoint>) -> Insight {
    Insight {
        id: Insight::make_id(core.kind, subspace),
        kind: core.kind,
        subspace: subspace.clone(),
        evidence: core.evidence,
        significance: core.significance,
        impact,
        score: core.significance * impact,
        snapshot,
    }
}

/// Every candidate of the frame that clears the floor, in frame order.
pub fn candidates(frame: &MiningFrame, cfg: &DetectorConfig) -> Vec<Insight> {
    let mut out = Vec::new();
    for b in &frame.breakdowns {
        if let Some(core) = detect_majority(&b.totals, cfg) {
            let snapshot = b
                .totals
                .iter()
                .map(|(id, v)| SnapshotPoint {
                    interval: None,
                    objective: Some(id.clone()),
                    value: *v,
                })
                .collect();
            out.push(finish(core, &b.subspace, b.impact, snapshot));
        }
    }
    for s in &frame.series {
        for kind in InsightKind::SERIES {
            if let Some(core) = detect(&s.points, kind, cfg) {
                let snapshot = s
                    .points
                    .iter()
                    .map(|(k, v)| SnapshotPoint {
                        interval: Some(*k),
                        objective: None,
                        value: *v,
                    })
                    .collect();
                out.push(finish(core, &s.subspace, s.impact, snapshot));
            }
        }
    }
    out
}

/// Ranking order: higher score first, then `(kind, subspace)` ascending.
pub fn rank_order(a: &Insight, b: &Insight) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| (a.kind, &a.subspace).cmp(&(b.kind, &b.subspace)))
}

struct Ranked(Insight);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        rank_order(&self.0, &other.0) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// The `k` best-ranked insights of the frame.
pub fn mine_top_k(frame: &MiningFrame, k: usize, cfg: &DetectorConfig) -> Vec<Insight> {
    if k == 0 {
        return Vec::new();
    }
    // max-heap on rank order keeps the worst retained candidate on top
    let mut heap = BinaryHeap::with_capacity(k.saturating_add(1).min(64));
    for insight in candidates(frame, cfg) {
        heap.push(Ranked(insight));
        if heap.len() > k {
            heap.pop();
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
}
