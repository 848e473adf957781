//! Shared fixtures for the benchmarks.

use journey_core::cache::{AggregationContext, CacheEntry};
use journey_core::config::EngineConfig;
use journey_core::model::{AttemptRecord, ObjectiveGraph, QuestionCatalog};
use journey_core::story::{generate_report, NarrativeBackend, ReportDocument, Templates};
use journey_core::synth::{synth, Scenario};

pub const SEED: u64 = 20250203;

pub struct Workload {
    pub graph: ObjectiveGraph,
    pub records: Vec<AttemptRecord>,
    pub catalog: QuestionCatalog,
    pub student: String,
    pub unit: String,
    pub config: EngineConfig,
}

impl Workload {
    pub fn new(scenario: Scenario, students: usize) -> Workload {
        let out = synth(scenario, SEED, students).expect("synth");
        Workload {
            graph: ObjectiveGraph::try_from(out.graph).expect("graph"),
            records: out.records,
            catalog: out.catalog,
            student: out.focal_student,
            unit: out.focal_unit,
            config: EngineConfig::default(),
        }
    }

    pub fn context(&self) -> AggregationContext<'_> {
        AggregationContext::new(&self.graph, &self.records, Some(&self.catalog), self.config.aggregation()).expect("context")
    }

    pub fn entry(&self) -> CacheEntry {
        self.context().refresh(&self.student, &self.unit).expect("refresh")
    }

    pub fn report(&self, entry: &CacheEntry) -> ReportDocument {
        generate_report(
            &self.graph,
            entry,
            &self.config,
            &NarrativeBackend::Template,
            Templates::builtin(),
            "2025-09-01T00:00:00Z",
        )
        .expect("report")
    }
}
