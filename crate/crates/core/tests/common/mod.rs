#![allow(dead_code)]

pub mod criteria;
pub mod oracle;

use std::sync::OnceLock;

use journey_core::cache::{AggregationContext, CacheEntry};
use journey_core::config::EngineConfig;
use journey_core::model::{AttemptRecord, ObjectiveGraph, QuestionCatalog};
use journey_core::story::{generate_report, NarrativeBackend, ReportDocument, Templates};
use journey_core::synth::{synth, Scenario, SynthOutput};

pub const SEED: u64 = 20250203;
pub const STAMP: &str = "2025-09-01T00:00:00Z";

pub struct Fixture {
    pub graph: ObjectiveGraph,
    pub records: Vec<AttemptRecord>,
    pub catalog: QuestionCatalog,
    pub student: String,
    pub unit: String,
    pub entry: CacheEntry,
    pub config: EngineConfig,
}

impl Fixture {
    pub fn build(scenario: Scenario, size: usize) -> Fixture {
        Fixture::from_output(synth(scenario, SEED, size).expect("synth"), EngineConfig::default())
    }

    pub fn from_output(out: SynthOutput, config: EngineConfig) -> Fixture {
        let graph = ObjectiveGraph::try_from(out.graph).expect("graph");
        let entry = AggregationContext::new(&graph, &out.records, Some(&out.catalog), config.aggregation())
            .and_then(|ctx| ctx.refresh(&out.focal_student, &out.focal_unit))
            .expect("refresh");
        Fixture {
            graph,
            records: out.records,
            catalog: out.catalog,
            student: out.focal_student,
            unit: out.focal_unit,
            entry,
            config,
        }
    }

    /// Same data, another student or unit in focus.
    pub fn for_student(&self, student: &str, unit: &str) -> Fixture {
        let entry = AggregationContext::new(&self.graph, &self.records, Some(&self.catalog), self.config.aggregation())
            .and_then(|ctx| ctx.refresh(student, unit))
            .expect("refresh");
        Fixture {
            graph: self.graph.clone(),
            records: self.records.clone(),
            catalog: self.catalog.clone(),
            student: student.into(),
            unit: unit.into(),
            entry,
            config: self.config.clone(),
        }
    }

    pub fn report(&self) -> ReportDocument {
        self.report_with(&NarrativeBackend::Template)
    }

    pub fn report_with(&self, backend: &NarrativeBackend) -> ReportDocument {
        generate_report(&self.graph, &self.entry, &self.config, backend, Templates::builtin(), STAMP).expect("report")
    }
}

/// The seven-unit fixture with a 200-student cohort, built once per test binary.
pub fn steven() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture::build(Scenario::Steven, 200))
}

/// The two-unit timing scenario with 200 students.
pub fn cohort() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture::build(Scenario::Cohort, 200))
}
