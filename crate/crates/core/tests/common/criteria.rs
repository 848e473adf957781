//! One check per acceptance criterion. Each returns a short detail line on
//! success and the reason on failure.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use journey_core::aggregation::{build_series, IntervalScheme, Measure, SeriesPoint, SeriesSubject, SeriesTarget};
use journey_core::cache::{AggregationContext, RecordStore};
use journey_core::config::EngineConfig;
use journey_core::formative::diagnose;
use journey_core::insight::{
    mine_top_k, DetectorConfig, FrameBreakdown, FrameSeries, MiningFrame, Subspace, SubspaceTarget,
};
use journey_core::llm::RecordingClient;
use journey_core::model::{
    AttemptRecord, Difficulty, GraphDocument, LearningObjective, Mode, ModeFilter, ObjectiveGraph, ObjectiveId,
    ObjectiveSet, Unit,
};
use journey_core::qa::{self, QaBackend, QaRequest};
use journey_core::story::{InfoGroup, NarrativeBackend, Phase, ReportDocument, StageId};
use journey_core::synth::Scenario;

use super::oracle;
use super::Fixture;

pub type Outcome = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> std::result::Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("{what} took {elapsed:?}, limit {limit:?}"))
    }
}

// ---- shared builders ---------------------------------------------------------

pub fn one_unit_graph(ids: &[&str], edges: &[(&str, &str)]) -> ObjectiveGraph {
    ObjectiveGraph::try_from(GraphDocument {
        units: vec![Unit {
            id: "U".into(),
            title: "Practice unit".into(),
            objectives: ids.iter().map(|i| ObjectiveId::new(*i)).collect(),
        }],
        objectives: ids
            .iter()
            .map(|i| LearningObjective {
                id: ObjectiveId::new(*i),
                label: format!("Objective {i}"),
                unit_id: "U".into(),
            })
            .collect(),
        edges: edges.iter().map(|(a, b)| (ObjectiveId::new(*a), ObjectiveId::new(*b))).collect(),
    })
    .expect("valid graph")
}

pub fn record(student: &str, tags: &[&str], day: i64, secs: i64, duration: f64, correct: bool, mode: Mode) -> AttemptRecord {
    AttemptRecord {
        student_id: student.into(),
        question_id: format!("q-{}-{day}-{secs}", tags.join("-")),
        timestamp: origin() + chrono::Duration::days(day) + chrono::Duration::seconds(secs),
        duration,
        correct,
        objectives: ObjectiveSet::new(tags.iter().copied()),
        difficulty: Difficulty::Medium,
        mode,
    }
}

pub fn origin() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 6, 0, 0, 0).single().unwrap()
}

fn subject(student: &str, target: SeriesTarget, mode: ModeFilter) -> SeriesSubject {
    SeriesSubject {
        student_id: student.into(),
        target,
        mode,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---- formula fidelity ----------------------------------------------------------

/// Closed-form hand fixtures for N, mean duration and accuracy.
pub fn hand_fixtures() -> Outcome {
    let graph = one_unit_graph(&["A", "B"], &[]);
    let ex = Mode::Exercise;
    let records = vec![
        record("s", &["A"], 0, 3600, 100.0, true, ex),
        record("s", &["A"], 1, 60, 140.0, true, ex),
        record("s", &["A"], 2, 0, 200.0, false, Mode::Test),
        record("s", &["A"], 14, 10, 30.0, false, ex),
        record("s", &["A"], 15, 10, 45.0, true, ex),
        record("s", &["A"], 16, 10, 60.0, false, ex),
        record("s", &["B"], 16, 20, 500.0, true, ex),
        record("s", &["A", "B"], 20, 0, 90.0, true, ex),
        record("t", &["A"], 0, 0, 10.0, true, ex),
    ];
    let scheme = IntervalScheme::new(origin(), chrono::Duration::days(7), 3).map_err(|e| e.to_string())?;
    let series = |target: SeriesTarget, mode| {
        build_series(&records, &scheme, &subject("s", target, mode), &graph).map_err(|e| e.to_string())
    };
    let check = |p: &SeriesPoint, n: usize, d: Option<f64>, u: Option<f64>, what: &str| -> std::result::Result<(), String> {
        ensure!(p.count == n, "{what}: N = {} expected {n}", p.count);
        let same = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => close(x, y, 1e-9),
            (None, None) => true,
            _ => false,
        };
        ensure!(same(p.mean_duration, d), "{what}: d = {:?} expected {d:?}", p.mean_duration);
        ensure!(same(p.accuracy, u), "{what}: u = {:?} expected {u:?}", p.accuracy);
        Ok(())
    };

    let a_ex = series(SeriesTarget::objective("A"), ModeFilter::Exercise)?;
    check(&a_ex.points[0], 2, Some(120.0), Some(1.0), "A exercise week 1")?;
    check(&a_ex.points[1], 0, None, None, "A exercise week 2")?;
    check(&a_ex.points[2], 4, Some((30.0 + 45.0 + 60.0 + 90.0) / 4.0), Some(0.5), "A exercise week 3")?;
    let a_all = series(SeriesTarget::objective("A"), ModeFilter::All)?;
    check(&a_all.points[0], 3, Some(440.0 / 3.0), Some(2.0 / 3.0), "A all week 1")?;
    let a_test = series(SeriesTarget::objective("A"), ModeFilter::Test)?;
    check(&a_test.points[0], 1, Some(200.0), Some(0.0), "A test week 1")?;
    let ab = series(
        SeriesTarget::Set {
            objectives: ObjectiveSet::new(["A", "B"]),
        },
        ModeFilter::All,
    )?;
    check(&ab.points[2], 1, Some(90.0), Some(1.0), "A+B week 3")?;
    check(&ab.points[0], 0, None, None, "A+B week 1")?;

    // 16 attempts, 15 correct
    let graph2 = one_unit_graph(&["S1102"], &[]);
    let recs: Vec<AttemptRecord> = (0..16)
        .map(|i| record("s", &["S1102"], i % 5, i * 60, 120.0, i != 3, ex))
        .collect();
    let sch = IntervalScheme::new(origin(), chrono::Duration::days(7), 1).map_err(|e| e.to_string())?;
    let s = build_series(&recs, &sch, &subject("s", SeriesTarget::objective("S1102"), ModeFilter::All), &graph2)
        .map_err(|e| e.to_string())?;
    ensure!(s.total().accuracy == Some(0.9375), "15 of 16 gave {:?}", s.total().accuracy);
    Ok("hand fixtures match closed forms".into())
}

fn arb_records() -> impl Strategy<Value = Vec<AttemptRecord>> {
    let tags = prop_oneof![Just(vec!["A"]), Just(vec!["B"]), Just(vec!["C"]), Just(vec!["A", "B"]), Just(vec!["A", "B", "C"])];
    prop::collection::vec(
        (
            tags,
            0i64..35,
            0i64..86_400,
            1u32..600,
            any::<bool>(),
            any::<bool>(),
            prop_oneof![Just("s"), Just("t")],
        ),
        0..60,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .map(|(tags, day, secs, dur, correct, test, student)| {
                record(
                    student,
                    &tags,
                    day,
                    secs,
                    f64::from(dur) + 0.25,
                    correct,
                    if test { Mode::Test } else { Mode::Exercise },
                )
            })
            .collect()
    })
}

fn seeded_runner(cases: u32, seed: u8) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]),
    )
}

/// Count conservation, bounds, weighted merge and order invariance over
/// randomized record sets.
pub fn aggregation_properties(cases: u32) -> Outcome {
    let graph = one_unit_graph(&["A", "B", "C"], &[("A", "B")]);
    let scheme = IntervalScheme::new(origin(), chrono::Duration::days(7), 5).map_err(|e| e.to_string())?;
    let targets = [
        SeriesTarget::objective("A"),
        SeriesTarget::objective("B"),
        SeriesTarget::objective("C"),
        SeriesTarget::Set {
            objectives: ObjectiveSet::new(["A", "B"]),
        },
        SeriesTarget::Unit { unit_id: "U".into() },
    ];
    let mut runner = seeded_runner(cases, 7);
    runner
        .run(&arb_records(), |records| {
            for target in &targets {
                for mode in ModeFilter::ALL {
                    let subj = subject("s", target.clone(), mode);
                    let s = build_series(&records, &scheme, &subj, &graph).unwrap();
                    prop_assert_eq!(s.points.len(), 5);
                    let expected = records
                        .iter()
                        .filter(|r| r.student_id == "s" && mode.admits(r.mode) && target.matches(r, &graph))
                        .count();
                    let total: usize = s.points.iter().map(|p| p.count).sum();
                    prop_assert_eq!(total, expected, "conservation for {:?}/{:?}", target, mode);
                    for p in &s.points {
                        prop_assert_eq!(p.accuracy.is_some(), p.count > 0);
                        prop_assert_eq!(p.mean_duration.is_some(), p.count > 0);
                        if let Some(u) = p.accuracy {
                            prop_assert!((0.0..=1.0).contains(&u));
                        }
                        if let Some(d) = p.mean_duration {
                            prop_assert!(d >= 0.0);
                        }
                    }
                    for i in 0..5 {
                        for j in i + 1..5 {
                            let (a, b) = (&s.points[i], &s.points[j]);
                            let m = a.merge(b);
                            if m.count > 0 {
                                let w = (a.count as f64 * a.accuracy.unwrap_or(0.0)
                                    + b.count as f64 * b.accuracy.unwrap_or(0.0))
                                    / m.count as f64;
                                prop_assert!((m.accuracy.unwrap() - w).abs() < 1e-12);
                            }
                        }
                    }
                    let mut reversed = records.clone();
                    reversed.reverse();
                    let r = build_series(&reversed, &scheme, &subj, &graph).unwrap();
                    prop_assert_eq!(&r.points, &s.points);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} randomized record sets"))
}

pub fn formula_fidelity() -> Outcome {
    let t = Instant::now();
    hand_fixtures()?;
    let props = aggregation_properties(1000)?;
    within(t.elapsed(), Duration::from_secs(10), "formula fidelity")?;
    Ok(format!("hand fixtures exact; {props}"))
}

// ---- Steven fixture --------------------------------------------------------------

pub fn steven_figures(f: &Fixture) -> Outcome {
    let e = &f.entry;
    let acc = |id: &str, mode| {
        e.objective_series(&ObjectiveId::new(id), mode)
            .and_then(|s| s.total().accuracy)
            .ok_or_else(|| format!("no series for {id}"))
    };
    let s1102 = acc("S1102", ModeFilter::All)?;
    ensure!(s1102 == 0.9375, "S1102 accuracy {s1102}");
    let mut unit3 = Vec::new();
    for id in ["N1114", "N1115", "N1136"] {
        let a = acc(id, ModeFilter::All)?;
        ensure!((0.24..=0.25).contains(&a), "{id} accuracy {a}");
        unit3.push(format!("{a:.4}"));
    }
    let profile = e
        .difficulty_profiles
        .get(&ObjectiveId::new("S1206"))
        .ok_or("no S1206 profile")?;
    let hard = profile.share(Difficulty::Hard);
    ensure!(format!("{hard:.4}") == "0.4902", "S1206 hard share {hard}");
    let mut tests = Vec::new();
    for id in ["S1102", "S1205", "S1206", "S2106"] {
        let a = acc(id, ModeFilter::Test)?;
        ensure!(a > 0.8, "{id} test accuracy {a}");
        tests.push(format!("{a:.4}"));
    }
    Ok(format!(
        "S1102 {s1102}; Unit 3 {}; S1206 hard {hard:.4}; tests {}",
        unit3.join("/"),
        tests.join("/")
    ))
}

pub fn steven_reproduction() -> Outcome {
    let t = Instant::now();
    let f = Fixture::build(Scenario::Steven, 200);
    let detail = steven_figures(&f)?;
    within(t.elapsed(), Duration::from_secs(5), "synth + aggregation")?;
    Ok(detail)
}

// ---- insight oracle ------------------------------------------------------------

fn random_values(rng: &mut ChaCha8Rng, k: usize) -> Vec<(usize, f64)> {
    let style = rng.random_range(0..6);
    let present: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.85)).collect();
    present
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            let v = match style {
                0 => rng.random_range(0.0..1.0),
                1 => f64::from(rng.random_range(0u32..5)),
                2 => 0.1 * i as f64 + rng.random_range(-0.05..0.05),
                3 => 0.25,
                4 => 120.0 + rng.random_range(-3.0..3.0),
                _ => {
                    if i == present.len() / 2 {
                        40.0
                    } else {
                        f64::from(rng.random_range(3u32..6))
                    }
                }
            };
            (idx, v)
        })
        .collect()
}

/// Seeded corpus of mining frames with K <= 8; returns frames and the number
/// of series they hold.
pub fn frame_corpus(seed: u64, frames: usize) -> (Vec<MiningFrame>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = ["A", "B", "C"];
    let mut out = Vec::new();
    let mut total = 0;
    for _ in 0..frames {
        let k = rng.random_range(1..=8);
        let mut frame = MiningFrame::default();
        let shared_impact = rng.random_range(0.1..1.0);
        for mode in ModeFilter::ALL {
            for target in ids
                .iter()
                .map(|i| SubspaceTarget::Objective { id: ObjectiveId::new(*i) })
                .chain([SubspaceTarget::All])
            {
                for measure in Measure::ALL {
                    if rng.random_bool(0.5) {
                        continue;
                    }
                    let impact = if target == SubspaceTarget::All {
                        1.0
                    } else if rng.random_bool(0.3) {
                        shared_impact
                    } else {
                        rng.random_range(0.05..1.0)
                    };
                    let subspace = Subspace {
                        mode,
                        target: target.clone(),
                        measure,
                    };
                    if target == SubspaceTarget::All {
                        let totals = ids
                            .iter()
                            .map(|i| (ObjectiveId::new(*i), f64::from(rng.random_range(0u32..20))))
                            .collect();
                        frame.breakdowns.push(FrameBreakdown {
                            subspace: subspace.clone(),
                            totals,
                            impact,
                        });
                    }
                    frame.series.push(FrameSeries {
                        subspace,
                        points: random_values(&mut rng, k),
                        impact,
                    });
                    total += 1;
                }
            }
        }
        out.push(frame);
    }
    (out, total)
}

pub fn compare_with_oracle(frame: &MiningFrame, k: usize, cfg: &DetectorConfig) -> std::result::Result<usize, String> {
    let got = mine_top_k(frame, k, cfg);
    let want = oracle::brute_top_k(frame, k, cfg.floor, cfg.permutations, cfg.seed);
    ensure!(got.len() == want.len(), "lengths {} vs {}", got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        ensure!(
            g.kind == w.kind && g.subspace == w.subspace,
            "rank {i}: {} vs {:?}:{}",
            g.id,
            w.kind,
            w.subspace.key()
        );
        ensure!(close(g.score, w.score, 1e-12), "rank {i} ({}): score {} vs {}", g.id, g.score, w.score);
    }
    Ok(got.len())
}

pub fn insight_oracle() -> Outcome {
    let t = Instant::now();
    let (frames, series) = frame_corpus(0x5eed, 40);
    ensure!(series >= 500, "corpus holds only {series} series");
    let mut compared = 0;
    for floor in [0.8, 0.5] {
        let cfg = DetectorConfig {
            floor,
            ..DetectorConfig::default()
        };
        for (i, frame) in frames.iter().enumerate() {
            compared += compare_with_oracle(frame, usize::MAX, &cfg).map_err(|e| format!("frame {i}, floor {floor}: {e}"))?;
            compare_with_oracle(frame, 3, &cfg).map_err(|e| format!("frame {i}, top 3: {e}"))?;
        }
    }
    within(t.elapsed(), Duration::from_secs(60), "oracle comparison")?;
    Ok(format!("{series} series in {} frames, {compared} ranked candidates identical", frames.len()))
}

// ---- top-k ----------------------------------------------------------------------

pub fn top_k_cardinality(f: &Fixture, report: &ReportDocument) -> Outcome {
    let cfg = f.config.detector();
    let frame = journey_core::insight::unit_frame(&f.entry, &f.graph)
        .map_err(|e| e.to_string())?
        .restrict_modes(&[ModeFilter::Exercise]);
    let above = journey_core::insight::candidates(&frame, &cfg).len();
    let embedded = report.insights().count();
    ensure!(above >= 3, "only {above} candidates clear the floor");
    ensure!(embedded == 3, "{embedded} summative insights embedded, {above} candidates");
    Ok(format!("{above} candidates above floor, {embedded} embedded"))
}

// ---- report structure ----------------------------------------------------------

pub fn report_structure(f: &Fixture) -> Outcome {
    let a = f.report();
    let b = f.report();
    ensure!(a.stages.len() == 12, "{} stages", a.stages.len());
    let ids: Vec<StageId> = a.stages.iter().map(|s| s.id).collect();
    ensure!(ids == StageId::ALL, "stage order {ids:?}");
    let count = |p: Phase| a.stages.iter().filter(|s| s.phase == p).count();
    let phases = [Phase::Departure, Phase::Initiation, Phase::Unification, Phase::Return].map(count);
    ensure!(phases == [3, 3, 3, 3], "phase partition {phases:?}");
    let gcount = |g: InfoGroup| a.stages.iter().filter(|s| s.info_group == g).count();
    let groups = [InfoGroup::OverviewIntro, InfoGroup::SummaryInfo, InfoGroup::FormativeGuidance].map(gcount);
    ensure!(groups == [3, 6, 3], "info-group partition {groups:?}");
    let (ja, jb) = (
        a.canonical_json().map_err(|e| e.to_string())?,
        b.canonical_json().map_err(|e| e.to_string())?,
    );
    ensure!(ja == jb, "two runs differ");
    let mut seen = BTreeSet::new();
    for s in &a.stages {
        for i in &s.insights {
            ensure!(seen.insert(i.id.clone()), "insight {} appears twice", i.id);
        }
    }
    a.validate(&f.graph).map_err(|e| e.to_string())?;
    Ok(format!("12 stages, (3,3,3,3), (3,6,3), {} bytes identical", ja.len()))
}

// ---- tri-level -----------------------------------------------------------------

fn random_dag(rng: &mut ChaCha8Rng) -> (ObjectiveGraph, Vec<String>) {
    let n = rng.random_range(1..=12);
    let ids: Vec<String> = (0..n).map(|i| format!("T{i:02}")).collect();
    let split = rng.random_range(0..=n);
    let density = rng.random_range(0.1..0.5);
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.random_bool(density) {
                edges.push((ObjectiveId::new(&ids[i]), ObjectiveId::new(&ids[j])));
            }
        }
    }
    let unit_of = |i: usize| if i < split { "UA" } else { "UB" };
    let mut units: Vec<Unit> = Vec::new();
    for u in ["UA", "UB"] {
        let objectives: Vec<ObjectiveId> = (0..n).filter(|&i| unit_of(i) == u).map(|i| ObjectiveId::new(&ids[i])).collect();
        if !objectives.is_empty() {
            units.push(Unit {
                id: u.into(),
                title: format!("Block {u}"),
                objectives,
            });
        }
    }
    let doc = GraphDocument {
        units,
        objectives: (0..n)
            .map(|i| LearningObjective {
                id: ObjectiveId::new(&ids[i]),
                label: format!("Topic {i}"),
                unit_id: unit_of(i).into(),
            })
            .collect(),
        edges,
    };
    (ObjectiveGraph::try_from(doc).expect("random DAG is valid"), ids)
}

fn random_records(rng: &mut ChaCha8Rng, ids: &[String]) -> Vec<AttemptRecord> {
    let mut out = Vec::new();
    for student in ["a", "b"] {
        for _ in 0..rng.random_range(5..40) {
            let width = rng.random_range(1..=3.min(ids.len()));
            let mut tags: Vec<&str> = Vec::new();
            while tags.len() < width {
                let t = ids[rng.random_range(0..ids.len())].as_str();
                if !tags.contains(&t) {
                    tags.push(t);
                }
            }
            out.push(record(
                student,
                &tags,
                rng.random_range(0..21),
                rng.random_range(0..86_400),
                rng.random_range(20.0..300.0),
                rng.random_bool(0.6),
                if rng.random_bool(0.3) { Mode::Test } else { Mode::Exercise },
            ));
        }
    }
    out
}

pub fn tri_level(cases: usize) -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xda9);
    let config = EngineConfig {
        permutations: 50,
        ..EngineConfig::default()
    };
    let mut pairs = 0;
    let mut associated = 0;
    for case in 0..cases {
        let (graph, ids) = random_dag(&mut rng);
        let records = random_records(&mut rng, &ids);
        let nodes: Vec<ObjectiveId> = ids.iter().map(ObjectiveId::new).collect();
        let closure = oracle::ancestor_distances(&nodes, graph.edges());
        let ctx = AggregationContext::new(&graph, &records, None, config.aggregation()).map_err(|e| e.to_string())?;
        for unit in graph.units() {
            let entry = ctx.refresh("a", &unit.id).map_err(|e| e.to_string())?;
            let diags = diagnose("a", &unit.id, &graph, Some(&entry), &config).map_err(|e| e.to_string())?;
            for d in &diags {
                let want = &closure[&d.objective];
                let got: BTreeMap<ObjectiveId, usize> =
                    d.ancestors.iter().map(|a| (a.objective.clone(), a.distance)).collect();
                ensure!(got.len() == d.ancestors.len(), "case {case}: duplicate ancestors for {}", d.objective);
                ensure!(&got == want, "case {case}: {} ancestors {got:?} vs oracle {want:?}", d.objective);
                pairs += got.len();
                let co = oracle::co_tag_sets(&records, "a", &d.objective);
                for set in &d.associated {
                    associated += 1;
                    let members: Vec<ObjectiveId> = set.objectives.iter().cloned().collect();
                    ensure!(
                        members.iter().all(|m| !want.contains_key(m)),
                        "case {case}: associated set {} of {} meets an ancestor",
                        set.objectives.key(),
                        d.objective
                    );
                    ensure!(co.contains(&members), "case {case}: set {} never co-tagged", set.objectives.key());
                }
            }
        }
    }
    within(t.elapsed(), Duration::from_secs(30), "tri-level cases")?;
    Ok(format!("{cases} random DAGs, {pairs} ancestor pairs, {associated} associated sets"))
}

// ---- QA ------------------------------------------------------------------------

pub struct PaperQuery {
    pub selection: Vec<&'static str>,
    pub question: &'static str,
    pub intent: qa::Intent,
    pub selected: Vec<&'static str>,
}

pub fn paper_queries() -> Vec<PaperQuery> {
    vec![
        PaperQuery {
            selection: vec!["s1.unit.U3"],
            question: "Why is my overall accuracy in Unit 3 so low?",
            intent: qa::Intent::WhyLowPerformance,
            selected: vec!["N1114", "N1115", "N1136"],
        },
        PaperQuery {
            selection: vec!["stage:S8"],
            question: "How did I do compared with my classmates?",
            intent: qa::Intent::CompareToPeers,
            selected: vec!["S1102", "S1205", "S1206", "S2106"],
        },
        PaperQuery {
            selection: vec!["s11.feedback.S1102"],
            question: "Why did you suggest this for S1102?",
            intent: qa::Intent::ExplainSuggestion,
            selected: vec!["S1102"],
        },
    ]
}

pub fn qa_round_trip(f: &Fixture, report: &ReportDocument) -> Outcome {
    let store = RecordStore::new(f.records.clone());
    let entry = AggregationContext::new(&f.graph, store.records(), Some(&f.catalog), f.config.aggregation())
        .and_then(|ctx| ctx.refresh(&f.student, &f.unit))
        .map_err(|e| e.to_string())?;
    store.reset_reads();
    let mut slowest = Duration::ZERO;
    for q in paper_queries() {
        let req = QaRequest {
            report_id: String::new(),
            selection: q.selection.iter().map(|s| s.to_string()).collect(),
            question: q.question.into(),
            mode_hint: None,
        };
        let t = Instant::now();
        let resp = qa::answer(&req, report, &entry, &f.graph, &f.config, &QaBackend::Deterministic)
            .map_err(|e| format!("{}: {e}", q.question))?;
        slowest = slowest.max(t.elapsed());
        ensure!(resp.grounding.intent == q.intent, "{}: intent {:?}", q.question, resp.grounding.intent);
        let selected: Vec<&str> = resp.grounding.selected.iter().map(|o| o.as_str()).collect();
        ensure!(selected == q.selected, "{}: selected {selected:?}", q.question);
        ensure!(!resp.answer.trim().is_empty(), "{}: empty answer", q.question);
        ensure!(!resp.charts.is_empty(), "{}: no chart", q.question);
        for c in &resp.charts {
            c.validate(&f.graph).map_err(|e| e.to_string())?;
        }
        ensure!(!resp.grounding.slices.is_empty(), "{}: no grounding slices", q.question);
        let stray = qa::unsupported_numerals(&resp, &f.graph);
        ensure!(stray.is_empty(), "{}: numerals {stray:?} not grounded", q.question);
        serde_json::to_string(&resp).map_err(|e| e.to_string())?;
    }
    ensure!(store.reads() == 0, "{} raw-record reads during QA", store.reads());
    within(slowest, Duration::from_millis(100), "slowest query")?;
    Ok(format!("3 queries grounded, 0 record reads, slowest {slowest:?}"))
}

// ---- provenance ----------------------------------------------------------------

pub fn audit(f: &Fixture, report: &ReportDocument) -> std::result::Result<usize, String> {
    let stray = report.audit_numerals(&f.graph).map_err(|e| e.to_string())?;
    ensure!(stray.is_empty(), "unsupported numerals {stray:?}");
    Ok(report.stages.iter().map(|s| s.narrative.len()).sum())
}

pub fn number_provenance(fixtures: &[&Fixture]) -> Outcome {
    let mut chars = 0;
    for f in fixtures {
        chars += audit(f, &f.report())?;
    }
    for seed in 1..=6u64 {
        let out = journey_core::synth::synth(Scenario::Steven, seed, 25).map_err(|e| e.to_string())?;
        let f = Fixture::from_output(out, EngineConfig::default());
        chars += audit(&f, &f.report()).map_err(|e| format!("seed {seed}: {e}"))?;
        for student in ["stu-0003", "stu-0011"] {
            for unit in ["U3", "U7"] {
                let g = f.for_student(student, unit);
                chars += audit(&g, &g.report()).map_err(|e| format!("seed {seed} {student}/{unit}: {e}"))?;
            }
        }
    }
    Ok(format!("{} reports audited, {chars} narrative chars", fixtures.len() + 6 * 5))
}

// ---- anonymization -------------------------------------------------------------

pub fn id_pattern(records: &[AttemptRecord]) -> Regex {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.student_id.as_str()).collect();
    let alternation: Vec<String> = ids.iter().map(|i| regex::escape(i)).collect();
    Regex::new(&format!(r"\b(?:{})\b", alternation.join("|"))).expect("id regex")
}

pub fn anonymization(f: &Fixture) -> Outcome {
    let ids = id_pattern(&f.records);
    let echo = RecordingClient::echo();
    let report = f.report_with(&NarrativeBackend::Llm {
        client: &echo,
        max_in_flight: 4,
    });
    ensure!(report.metadata.fallbacks.is_empty(), "echo replies fell back: {:?}", report.metadata.fallbacks);
    let qa_client = RecordingClient::new(|p| {
        let draft = journey_core::llm::draft_of(p);
        Ok(serde_json::json!({ "answer": draft }).to_string())
    });
    for q in paper_queries() {
        let req = QaRequest {
            report_id: String::new(),
            selection: q.selection.iter().map(|s| s.to_string()).collect(),
            question: q.question.into(),
            mode_hint: None,
        };
        let r = qa::answer(&req, &report, &f.entry, &f.graph, &f.config, &QaBackend::Llm(&qa_client))
            .map_err(|e| e.to_string())?;
        ensure!(r.fallback.is_none(), "QA echo fell back: {:?}", r.fallback);
    }
    let mut prompts = echo.prompts();
    prompts.extend(qa_client.prompts());
    ensure!(!prompts.is_empty(), "no prompts captured");
    for p in &prompts {
        if let Some(m) = ids.find(p) {
            return Err(format!("prompt leaks `{}`", m.as_str()));
        }
    }
    ensure!(
        !report.to_json().map_err(|e| e.to_string())?.contains(&format!("\"{}\"", f.student)),
        "report document carries the raw id"
    );

    let template = f.report();
    let expected: Vec<StageId> = template.stages.iter().filter(|s| !s.transitional).map(|s| s.id).collect();
    let deficient: [(&str, RecordingClient); 3] = [
        ("invented numeral", RecordingClient::new(|p| Ok(format!("{} Also 987 more.", journey_core::llm::draft_of(p))))),
        ("empty reply", RecordingClient::new(|_| Ok("   ".into()))),
        ("transport error", RecordingClient::failing()),
    ];
    for (label, client) in &deficient {
        let r = f.report_with(&NarrativeBackend::Llm {
            client,
            max_in_flight: 2,
        });
        let flagged: Vec<StageId> = r.metadata.fallbacks.iter().map(|x| x.stage).collect();
        ensure!(flagged == expected, "{label}: flagged {flagged:?}, expected {expected:?}");
        for (a, b) in r.stages.iter().zip(&template.stages) {
            ensure!(a.narrative == b.narrative, "{label}: {} did not fall back to the template", a.id);
        }
    }
    Ok(format!("{} prompts clean; 3 deficient mocks fell back on {} stages each", prompts.len(), expected.len()))
}

// ---- latency -------------------------------------------------------------------

pub fn latency() -> Outcome {
    let out = journey_core::synth::synth(Scenario::Cohort, super::SEED, 200).map_err(|e| e.to_string())?;
    let graph = ObjectiveGraph::try_from(out.graph.clone()).map_err(|e| e.to_string())?;
    let students = out.records.iter().map(|r| r.student_id.as_str()).collect::<BTreeSet<_>>().len();
    let config = EngineConfig::default();
    let t = Instant::now();
    let ctx = AggregationContext::new(&graph, &out.records, Some(&out.catalog), config.aggregation()).map_err(|e| e.to_string())?;
    let entry = ctx.refresh(&out.focal_student, &out.focal_unit).map_err(|e| e.to_string())?;
    let k = entry.schemes.for_unit(&out.focal_unit).map_or(0, |s| s.count);
    let report = journey_core::story::generate_report(
        &graph,
        &entry,
        &config,
        &NarrativeBackend::Template,
        journey_core::story::Templates::builtin(),
        super::STAMP,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure!(report.stages.len() == 12, "incomplete report");
    ensure!(students == 200 && graph.objectives().count() == 10 && k == 12, "scenario shape {students}/{k}");
    within(elapsed, Duration::from_secs(2), "end-to-end report")?;
    Ok(format!(
        "{students} students, 10 objectives, {k} intervals, {} records: {elapsed:?}",
        out.records.len()
    ))
}
