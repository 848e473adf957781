mod common;

use common::{criteria, oracle};
use journey_core::insight::{
    candidates, detect, enumerate_subspaces, mine_top_k, unit_frame, DetectorConfig, Evidence, InsightKind, SubspaceTarget,
};
use journey_core::model::ModeFilter;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

#[test]
fn ranking_matches_brute_force_over_seeded_corpus() {
    criteria::insight_oracle().unwrap();
}

#[test]
fn steven_unit_frame_matches_brute_force() {
    let f = common::steven();
    let frame = unit_frame(&f.entry, &f.graph).unwrap();
    let cfg = f.config.detector();
    let n = criteria::compare_with_oracle(&frame, usize::MAX, &cfg).unwrap();
    assert!(n >= 3);
    criteria::compare_with_oracle(&frame, 3, &cfg).unwrap();
}

#[test]
fn subspace_counts() {
    let f = common::steven();
    assert_eq!(enumerate_subspaces(&f.graph, "U7").unwrap().len(), 45);
    assert_eq!(enumerate_subspaces(&f.graph, "U2").unwrap().len(), 27);
    let one = criteria::one_unit_graph(&["A"], &[]);
    assert_eq!(enumerate_subspaces(&one, "U").unwrap().len(), 18);
    assert_eq!(enumerate_subspaces(&f.graph, "U7").unwrap(), enumerate_subspaces(&f.graph, "U7").unwrap());
}

#[test]
fn impact_is_a_true_share() {
    let f = common::steven();
    let unit = f.graph.unit("U7").unwrap();
    for mode in ModeFilter::ALL {
        let parts: f64 = unit
            .objectives
            .iter()
            .map(|id| f.entry.shares.impact(mode, &SubspaceTarget::Objective { id: id.clone() }))
            .sum();
        let whole = f.entry.shares.impact(mode, &SubspaceTarget::All);
        assert!((parts - whole).abs() < 1e-12, "{mode:?}: {parts} vs {whole}");
    }
    assert_eq!(f.entry.shares.impact(ModeFilter::All, &SubspaceTarget::All), 1.0);
}

#[test]
fn evidence_points_at_present_intervals() {
    let f = common::steven();
    let frame = unit_frame(&f.entry, &f.graph).unwrap();
    let cfg = DetectorConfig {
        floor: 0.0,
        ..f.config.detector()
    };
    for i in candidates(&frame, &cfg) {
        assert!((0.0..=1.0).contains(&i.score), "{} score {}", i.id, i.score);
        let present: Vec<usize> = i.snapshot.iter().filter_map(|p| p.interval).collect();
        match &i.evidence {
            Evidence::Outlier { interval, .. } | Evidence::ChangePoint { interval, .. } => {
                assert!(present.contains(interval), "{} cites absent interval {interval}", i.id)
            }
            Evidence::Majority { dominant, .. } => {
                assert!(i.snapshot.iter().any(|p| p.objective.as_ref() == Some(dominant)))
            }
            _ => {}
        }
    }
}

#[test]
fn top_k_truncates_without_padding() {
    let f = common::steven();
    let frame = unit_frame(&f.entry, &f.graph).unwrap();
    let cfg = f.config.detector();
    let all = candidates(&frame, &cfg).len();
    assert_eq!(mine_top_k(&frame, all + 10, &cfg).len(), all);
    assert_eq!(mine_top_k(&frame, 3, &cfg).len(), 3);
    assert!(mine_top_k(&frame, 0, &cfg).is_empty());
}

#[test]
fn worked_detector_examples() {
    let cfg = DetectorConfig::default();
    let pts = |v: &[f64]| v.iter().copied().enumerate().collect::<Vec<_>>();
    let trend = detect(&pts(&[1.0, 2.0, 3.0, 4.0, 5.0]), InsightKind::Trend, &cfg).unwrap();
    let Evidence::Trend { slope, .. } = trend.evidence else { panic!() };
    assert!((slope - 1.0).abs() < 1e-12);
    let sig = oracle::series_significance(&pts(&[1.0, 2.0, 3.0, 4.0, 5.0]), InsightKind::Trend, 1000, cfg.seed).unwrap();
    assert!((trend.significance - sig).abs() < 1e-12);
    let out = detect(&pts(&[5.0, 5.0, 5.0, 50.0, 5.0]), InsightKind::Outlier, &cfg).unwrap();
    assert!(matches!(out.evidence, Evidence::Outlier { interval: 3, .. }));
    assert!(detect(&pts(&[5.0; 4]), InsightKind::LowVariance, &cfg).is_some());
    assert!(detect(&pts(&[5.0; 4]), InsightKind::Trend, &cfg).is_none());
    assert!(detect(&pts(&[0.1; 5]), InsightKind::ChangePoint, &cfg).is_none());
}

#[test]
fn trend_is_scale_invariant() {
    let cfg = DetectorConfig {
        floor: 0.0,
        permutations: 200,
        seed: 7919,
    };
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 300,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::from_seed(RngAlgorithm::ChaCha, &[3; 32]),
    );
    let strat = (prop::collection::vec(0.0f64..100.0, 3..9), 0.01f64..50.0);
    runner
        .run(&strat, |(values, c)| {
            let p: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
            let q: Vec<(usize, f64)> = values.iter().map(|v| v * c).enumerate().collect();
            match (detect(&p, InsightKind::Trend, &cfg), detect(&q, InsightKind::Trend, &cfg)) {
                (Some(a), Some(b)) => {
                    prop_assert!((a.significance - b.significance).abs() < 1e-9);
                    let (Evidence::Trend { slope: s1, .. }, Evidence::Trend { slope: s2, .. }) = (a.evidence, b.evidence) else {
                        unreachable!()
                    };
                    prop_assert_eq!(s1.signum(), s2.signum());
                    prop_assert!((s1 * c - s2).abs() <= 1e-9 * s2.abs().max(1.0));
                }
                (None, None) => {}
                (a, b) => prop_assert!(false, "one side abstained: {:?} {:?}", a, b),
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn mining_is_deterministic() {
    let f = common::steven();
    let frame = unit_frame(&f.entry, &f.graph).unwrap();
    let cfg = f.config.detector();
    assert_eq!(mine_top_k(&frame, 5, &cfg), mine_top_k(&frame, 5, &cfg));
}
