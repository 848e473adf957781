//! Slow, independent reimplementations used as test oracles. Nothing here
//! calls into the library's statistics or aggregation code.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use journey_core::insight::{InsightKind, MiningFrame, Subspace};
use journey_core::model::{AttemptRecord, ModeFilter, ObjectiveGraph, ObjectiveId};

// ---- permutation machinery --------------------------------------------------

struct Gen(u64);

impl Gen {
    fn draw(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 32
    }

    fn permute(&mut self, v: &mut [f64]) {
        let mut i = v.len();
        while i > 1 {
            i -= 1;
            let j = ((self.draw() * (i as u64 + 1)) >> 32) as usize;
            v.swap(i, j);
        }
    }
}

fn p_value(values: &[f64], stat: impl Fn(&[f64]) -> f64, perms: usize, seed: u64) -> f64 {
    let obs = stat(values);
    // an infinite statistic is only matched by another infinite one
    let cut = if obs.is_finite() { obs - 1e-12 * obs.abs().max(1.0) } else { obs };
    let mut g = Gen(seed);
    let mut v = values.to_vec();
    let hits = (0..perms)
        .filter(|_| {
            g.permute(&mut v);
            stat(&v) >= cut
        })
        .count();
    (hits as f64 + 1.0) / (perms as f64 + 1.0)
}

fn all_equal(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Pearson r, centred two-pass form.
fn corr(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if all_equal(xs) || all_equal(ys) {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cx: Vec<f64> = xs.iter().map(|x| x - mx).collect();
    let cy: Vec<f64> = ys.iter().map(|y| y - my).collect();
    let num: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    let den = (cx.iter().map(|a| a * a).sum::<f64>() * cy.iter().map(|b| b * b).sum::<f64>()).sqrt();
    Some(num / den)
}

/// Best prefix/suffix split by direct enumeration; first maximum wins.
fn split(ys: &[f64]) -> (usize, f64) {
    let n = ys.len();
    if all_equal(ys) {
        return (1, 0.0);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for s in 1..n {
        let (a, b) = (&ys[..s], &ys[s..]);
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let ss: f64 = a.iter().map(|v| (v - ma) * (v - ma)).sum::<f64>() + b.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>();
        let sd = (ss / (n as f64 - 2.0)).sqrt();
        let gap = (ma - mb).abs();
        let st = match (sd > 0.0, gap > 0.0) {
            (true, _) => gap / sd,
            (false, true) => f64::INFINITY,
            (false, false) => 0.0,
        };
        if st > best.1 {
            best = (s, st);
        }
    }
    best
}

fn erfc(x: f64) -> f64 {
    const C: [f64; 10] = [
        -1.26551223,
        1.00002368,
        0.37409196,
        0.09678418,
        -0.18628806,
        0.27886807,
        -1.13520398,
        1.48851587,
        -0.82215223,
        0.17087277,
    ];
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let mut acc = C[9];
    for c in C[1..9].iter().rev() {
        acc = c + t * acc;
    }
    let y = t * (-z * z + C[0] + t * acc).exp();
    if x >= 0.0 {
        y
    } else {
        2.0 - y
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n.is_multiple_of(2) {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    } else {
        s[n / 2]
    }
}

/// Significance of one series detector, or `None` when it abstains.
pub fn series_significance(points: &[(usize, f64)], kind: InsightKind, perms: usize, seed: u64) -> Option<f64> {
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = ys.len();
    match kind {
        InsightKind::Trend => {
            if n < 3 {
                return None;
            }
            let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
            corr(&xs, &ys)?;
            Some(1.0 - p_value(&ys, |v| corr(&xs, v).map_or(0.0, f64::abs), perms, seed))
        }
        InsightKind::ChangePoint => {
            if n < 3 || split(&ys).1 == 0.0 {
                return None;
            }
            Some(1.0 - p_value(&ys, |v| split(v).1, perms, seed))
        }
        InsightKind::Outlier => {
            if n < 3 {
                return None;
            }
            let m = median(&ys);
            let dev: Vec<f64> = ys.iter().map(|y| (y - m).abs()).collect();
            let mad = median(&dev);
            let mean_dev = dev.iter().sum::<f64>() / n as f64;
            let scale = if mad > 0.0 {
                1.4826 * mad
            } else if mean_dev > 0.0 {
                1.253314 * mean_dev
            } else {
                return None;
            };
            let z = dev.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / scale;
            Some((1.0 - erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0))
        }
        InsightKind::LowVariance => {
            if n < 2 {
                return None;
            }
            let mean = ys.iter().sum::<f64>() / n as f64;
            if mean <= 0.0 {
                return None;
            }
            let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
            Some((1.0 - var.sqrt() / mean / 0.1).max(0.0))
        }
        InsightKind::Majority => None,
    }
}

fn majority_significance(totals: &[(ObjectiveId, f64)]) -> Option<f64> {
    if totals.len() < 2 {
        return None;
    }
    let sum: f64 = totals.iter().map(|t| t.1).sum();
    if sum <= 0.0 {
        return None;
    }
    let top = totals.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let s = top / sum;
    (s > 0.5).then_some(s)
}

/// A scored candidate as the oracle sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub kind: InsightKind,
    pub subspace: Subspace,
    pub score: f64,
}

/// Scores every (subspace, kind) pair of the frame, keeps those above the
/// floor, sorts the whole list and truncates to `k`.
pub fn brute_top_k(frame: &MiningFrame, k: usize, floor: f64, perms: usize, seed: u64) -> Vec<Scored> {
    let mut all = Vec::new();
    for b in &frame.breakdowns {
        if let Some(sig) = majority_significance(&b.totals).filter(|s| *s > floor) {
            all.push(Scored {
                kind: InsightKind::Majority,
                subspace: b.subspace.clone(),
                score: sig * b.impact,
            });
        }
    }
    for s in &frame.series {
        for kind in [
            InsightKind::Outlier,
            InsightKind::Trend,
            InsightKind::ChangePoint,
            InsightKind::LowVariance,
        ] {
            if let Some(sig) = series_significance(&s.points, kind, perms, seed).filter(|v| *v > floor) {
                all.push(Scored {
                    kind,
                    subspace: s.subspace.clone(),
                    score: sig * s.impact,
                });
            }
        }
    }
    all.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| (a.kind, &a.subspace).cmp(&(b.kind, &b.subspace)))
    });
    all.truncate(k);
    all
}

// ---- graph closure ---------------------------------------------------------

/// Shortest upstream distance to every ancestor, by Floyd-Warshall.
pub fn ancestor_distances(nodes: &[ObjectiveId], edges: &[(ObjectiveId, ObjectiveId)]) -> BTreeMap<ObjectiveId, BTreeMap<ObjectiveId, usize>> {
    let n = nodes.len();
    let idx: HashMap<&ObjectiveId, usize> = nodes.iter().enumerate().map(|(i, o)| (o, i)).collect();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (a, b) in edges {
        d[idx[a]][idx[b]] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (j, target) in nodes.iter().enumerate() {
        let ups: BTreeMap<ObjectiveId, usize> = (0..n)
            .filter(|&i| i != j && d[i][j] < inf)
            .map(|i| (nodes[i].clone(), d[i][j]))
            .collect();
        out.insert(target.clone(), ups);
    }
    out
}

// ---- flat aggregation ------------------------------------------------------

fn unit_origin(records: &[AttemptRecord], graph: &ObjectiveGraph, unit: &str) -> Option<DateTime<Utc>> {
    records
        .iter()
        .filter(|r| r.objectives.iter().any(|o| graph.unit_of(o).ok() == Some(unit)))
        .map(|r| r.timestamp)
        .min()
        .map(|t| t.date_naive().and_hms_opt(0, 0, 0).unwrap().and_utc())
}

/// Peer means for one (objective, mode, interval) cell recomputed by a full
/// scan: `(mean accuracy, mean duration, mean count, students)`.
pub fn flat_cell(
    records: &[AttemptRecord],
    graph: &ObjectiveGraph,
    obj: &ObjectiveId,
    mode: ModeFilter,
    interval: usize,
    width_days: i64,
) -> Option<(f64, f64, f64, usize)> {
    let unit = graph.unit_of(obj).ok()?;
    let origin = unit_origin(records, graph, unit)?;
    let width = width_days * 86_400;
    let mut per: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for r in records {
        let in_mode = match mode {
            ModeFilter::All => true,
            ModeFilter::Exercise => r.mode == journey_core::model::Mode::Exercise,
            ModeFilter::Test => r.mode == journey_core::model::Mode::Test,
        };
        let secs = (r.timestamp - origin).num_seconds();
        if !in_mode || !r.objectives.contains(obj) || secs < 0 || (secs / width) as usize != interval {
            continue;
        }
        let e = per.entry(&r.student_id).or_default();
        e.0 += 1.0;
        e.1 += if r.correct { 1.0 } else { 0.0 };
        e.2 += r.duration;
    }
    if per.is_empty() {
        return None;
    }
    let m = per.len() as f64;
    let acc = per.values().map(|v| v.1 / v.0).sum::<f64>() / m;
    let dur = per.values().map(|v| v.2 / v.0).sum::<f64>() / m;
    let cnt = per.values().map(|v| v.0).sum::<f64>() / m;
    Some((acc, dur, cnt, per.len()))
}

/// Distinct objective sets on multi-tagged records of `student` touching `obj`.
pub fn co_tag_sets(records: &[AttemptRecord], student: &str, obj: &ObjectiveId) -> BTreeSet<Vec<ObjectiveId>> {
    records
        .iter()
        .filter(|r| r.student_id == student && r.objectives.len() > 1 && r.objectives.contains(obj))
        .map(|r| r.objectives.iter().cloned().collect())
        .collect()
}
