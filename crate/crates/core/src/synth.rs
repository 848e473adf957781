//! Deterministic synthetic cohorts.
//!
//! `steven` is a seven-unit curriculum whose focal student is scripted
//! attempt by attempt so that the aggregates land on fixed figures:
//!
//! - S1102: 30 of 32 correct (15/16 in each mode), all easy, about 120 s
//! - Unit 3: N1114 6/25, N1115 5/20, N1136 6/24, all medium
//! - S1206: 51 catalog questions, 25 of them hard
//! - Unit 7 tests: S1102 15/16, S1205 9/10, S1206 9/10, S2106 10/12
//!
//! Peers are drawn from a seeded ChaCha generator. `cohort` is a plain
//! two-unit course used for timing: ten objectives, twelve weeks per unit.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttemptRecord, Difficulty, GraphDocument, LearningObjective, Mode, ObjectiveId, ObjectiveSet, QuestionCatalog,
    QuestionEntry, Unit,
};

pub const FOCAL_STUDENT: &str = "steven";
pub const COHORT_FOCAL: &str = "stu-0000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Steven,
    Cohort,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steven" => Ok(Scenario::Steven),
            "cohort" => Ok(Scenario::Cohort),
            other => Err(Error::Config(format!("unknown scenario `{other}` (expected steven|cohort)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub graph: GraphDocument,
    pub records: Vec<AttemptRecord>,
    pub catalog: QuestionCatalog,
    /// The scripted student the scenario is built around.
    pub focal_student: String,
    /// The unit the focal report is about.
    pub focal_unit: String,
}

/// Generates a scenario. `cohort_size` counts every student, focal included.
pub fn synth(scenario: Scenario, seed: u64, cohort_size: usize) -> Result<SynthOutput> {
    if cohort_size == 0 {
        return Err(Error::Config("cohort size must be at least 1".into()));
    }
    match scenario {
        Scenario::Steven => Ok(steven(seed, cohort_size)),
        Scenario::Cohort => Ok(cohort(seed, cohort_size)),
    }
}

fn base_date() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 2, 3, 0, 0, 0).single().expect("valid date")
}

struct Pool {
    key: String,
    objectives: ObjectiveSet,
    questions: Vec<(String, Difficulty)>,
}

impl Pool {
    fn new(objectives: &[&str], mix: &[(Difficulty, usize)]) -> Pool {
        let key = objectives.join("-");
        let mut questions = Vec::new();
        for (d, n) in mix {
            for _ in 0..*n {
                let id = format!("q-{key}-{:03}", questions.len() + 1);
                questions.push((id, *d));
            }
        }
        Pool {
            key,
            objectives: ObjectiveSet::new(objectives.iter().copied()),
            questions,
        }
    }

    fn register(&self, catalog: &mut QuestionCatalog) {
        for (id, d) in &self.questions {
            catalog
                .insert(
                    id.clone(),
                    QuestionEntry {
                        objectives: self.objectives.clone(),
                        difficulty: *d,
                    },
                )
                .expect("pool question ids are unique");
        }
    }
}

/// Unit layout: id, title, objectives, first week, weeks (last one is the test week).
struct UnitPlan {
    id: &'static str,
    title: &'static str,
    objectives: &'static [(&'static str, &'static str)],
    start_week: i64,
    weeks: usize,
}

const STEVEN_UNITS: &[UnitPlan] = &[
    UnitPlan {
        id: "U1",
        title: "Unit 1",
        objectives: &[("N1101", "Counting within a thousand"), ("N1102", "Place value")],
        start_week: 0,
        weeks: 4,
    },
    UnitPlan {
        id: "U2",
        title: "Unit 2",
        objectives: &[("N1107", "Adding whole numbers"), ("N1108", "Subtracting whole numbers")],
        start_week: 4,
        weeks: 4,
    },
    UnitPlan {
        id: "U3",
        title: "Unit 3",
        objectives: &[
            ("N1114", "Multiplication facts"),
            ("N1115", "Multiplying by one digit"),
            ("N1136", "Equal groups and arrays"),
        ],
        start_week: 8,
        weeks: 4,
    },
    UnitPlan {
        id: "U4",
        title: "Unit 4",
        objectives: &[("N1120", "Division facts"), ("N1121", "Remainders")],
        start_week: 12,
        weeks: 4,
    },
    UnitPlan {
        id: "U5",
        title: "Unit 5",
        objectives: &[("N1125", "Unit fractions"), ("N1126", "Comparing fractions")],
        start_week: 16,
        weeks: 4,
    },
    UnitPlan {
        id: "U6",
        title: "Unit 6",
        objectives: &[("N1130", "Telling time"), ("N1131", "Elapsed time")],
        start_week: 20,
        weeks: 4,
    },
    UnitPlan {
        id: "U7",
        title: "Unit 7",
        objectives: &[
            ("S1102", "Reading bar graphs"),
            ("S1205", "Perimeter of polygons"),
            ("S1206", "Area with unit squares"),
            ("S2106", "Measuring length"),
        ],
        start_week: 24,
        weeks: 6,
    },
];

const STEVEN_EDGES: &[(&str, &str)] = &[
    ("N1101", "N1102"),
    ("N1101", "N1114"),
    ("N1102", "N1107"),
    ("N1107", "N1108"),
    ("N1107", "S1102"),
    ("N1108", "N1120"),
    ("N1114", "N1115"),
    ("N1114", "N1120"),
    ("N1115", "S1205"),
    ("N1120", "N1121"),
    ("N1121", "N1125"),
    ("N1125", "N1126"),
    ("N1125", "S2106"),
    ("N1126", "N1130"),
    ("N1130", "N1131"),
    ("N1136", "S1206"),
    ("S1102", "S1206"),
];

fn graph_document(units: &[UnitPlan], edges: &[(&str, &str)]) -> GraphDocument {
    GraphDocument {
        units: units
            .iter()
            .map(|u| Unit {
                id: u.id.to_owned(),
                title: u.title.to_owned(),
                objectives: u.objectives.iter().map(|(id, _)| ObjectiveId::new(*id)).collect(),
            })
            .collect(),
        objectives: units
            .iter()
            .flat_map(|u| {
                u.objectives.iter().map(|(id, label)| LearningObjective {
                    id: ObjectiveId::new(*id),
                    label: (*label).to_owned(),
                    unit_id: u.id.to_owned(),
                })
            })
            .collect(),
        edges: edges
            .iter()
            .map(|(a, b)| (ObjectiveId::new(*a), ObjectiveId::new(*b)))
            .collect(),
    }
}

/// One scripted block: `n` attempts in a week, the first `k` in the
/// evenly spread correct positions.
struct Block {
    week: usize,
    n: usize,
    k: usize,
}

fn blocks(ns: &[usize], ks: &[usize]) -> Vec<Block> {
    ns.iter()
        .zip(ks)
        .enumerate()
        .map(|(week, (&n, &k))| Block { week, n, k })
        .collect()
}

/// Bresenham spread of `k` successes over `n` slots.
fn spread(n: usize, k: usize, i: usize) -> bool {
    (i + 1) * k / n > i * k / n
}

struct Script<'a> {
    student: &'a str,
    unit_start: DateTime<Utc>,
    records: &'a mut Vec<AttemptRecord>,
}

impl Script<'_> {
    /// Emits scripted attempts; `question` picks the pool entry for the
    /// running attempt index and `duration` the seconds spent.
    fn emit(
        &mut self,
        pool: &Pool,
        mode: Mode,
        plan: &[Block],
        question: impl Fn(usize) -> usize,
        duration: impl Fn(usize) -> f64,
    ) {
        let mut idx = 0;
        for b in plan {
            for i in 0..b.n {
                let (qid, difficulty) = &pool.questions[question(idx) % pool.questions.len()];
                let day = (i % 5) as i64;
                let ts = self.unit_start
                    + Duration::weeks(b.week as i64)
                    + Duration::days(day)
                    + Duration::hours(16)
                    + Duration::minutes((i / 5) as i64 * 7 + idx as i64 % 5);
                self.records.push(AttemptRecord {
                    student_id: self.student.to_owned(),
                    question_id: qid.clone(),
                    timestamp: ts,
                    duration: duration(idx),
                    correct: spread(b.n, b.k, i),
                    objectives: pool.objectives.clone(),
                    difficulty: *difficulty,
                    mode,
                });
                idx += 1;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn peer_attempts(
    rng: &mut ChaCha8Rng,
    student: &str,
    pool: &Pool,
    unit_start: DateTime<Utc>,
    exercise_weeks: usize,
    per_week: (usize, usize),
    test_attempts: (usize, usize),
    records: &mut Vec<AttemptRecord>,
) {
    let ability: f64 = rng.random_range(0.45..0.92);
    let pace: f64 = rng.random_range(70.0..170.0);
    let mut push = |rng: &mut ChaCha8Rng, week: usize, mode: Mode| {
        let (qid, difficulty) = &pool.questions[rng.random_range(0..pool.questions.len())];
        let penalty = match difficulty {
            Difficulty::Easy => 0.0,
            Difficulty::Medium => 0.08,
            Difficulty::Hard => 0.16,
        };
        let ts = unit_start
            + Duration::weeks(week as i64)
            + Duration::days(rng.random_range(0..5))
            + Duration::hours(rng.random_range(8..20))
            + Duration::minutes(rng.random_range(0..60));
        records.push(AttemptRecord {
            student_id: student.to_owned(),
            question_id: qid.clone(),
            timestamp: ts,
            duration: (pace * rng.random_range(0.6..1.4)).round(),
            correct: rng.random_bool((ability - penalty).clamp(0.05, 0.98)),
            objectives: pool.objectives.clone(),
            difficulty: *difficulty,
            mode,
        });
    };
    for week in 0..exercise_weeks {
        for _ in 0..rng.random_range(per_week.0..=per_week.1) {
            push(rng, week, Mode::Exercise);
        }
    }
    for _ in 0..rng.random_range(test_attempts.0..=test_attempts.1) {
        push(rng, exercise_weeks, Mode::Test);
    }
}

fn mixed(n_easy: usize, n_medium: usize, n_hard: usize) -> Vec<(Difficulty, usize)> {
    vec![
        (Difficulty::Easy, n_easy),
        (Difficulty::Medium, n_medium),
        (Difficulty::Hard, n_hard),
    ]
}

fn steven(seed: u64, cohort_size: usize) -> SynthOutput {
    let graph = graph_document(STEVEN_UNITS, STEVEN_EDGES);
    let mut pools: Vec<(usize, Pool)> = Vec::new();
    for (u, plan) in STEVEN_UNITS.iter().enumerate() {
        for (id, _) in plan.objectives {
            let mix = match *id {
                "N1114" | "N1115" | "N1136" | "S1205" => mixed(0, 16, 0),
                "S1102" => mixed(16, 0, 0),
                "S1206" => mixed(11, 15, 25),
                "S2106" => mixed(4, 6, 4),
                _ => mixed(4, 4, 4),
            };
            pools.push((u, Pool::new(&[id], &mix)));
        }
    }
    pools.push((6, Pool::new(&["S1205", "S2106"], &mixed(0, 6, 0))));
    let pool = |key: &str| &pools.iter().find(|(_, p)| p.key == key).expect("pool exists").1;

    let mut catalog = QuestionCatalog::default();
    for (_, p) in &pools {
        p.register(&mut catalog);
    }

    let unit_start = |u: usize| base_date() + Duration::weeks(STEVEN_UNITS[u].start_week);
    let mut records = Vec::new();

    // the scripted student
    {
        let mut s = Script {
            student: FOCAL_STUDENT,
            unit_start: unit_start(0),
            records: &mut records,
        };
        let varied = |i: usize| 80.0 + ((i * 37) % 90) as f64;
        for (u, plan) in STEVEN_UNITS.iter().enumerate().take(6) {
            s.unit_start = unit_start(u);
            for (j, (id, _)) in plan.objectives.iter().enumerate() {
                let p = pool(id);
                let (ex, test) = match *id {
                    "N1114" => (blocks(&[7, 7, 7], &[2, 1, 2]), (4, 1)),
                    "N1115" => (blocks(&[6, 5, 5], &[1, 2, 1]), (4, 1)),
                    "N1136" => (blocks(&[7, 7, 6], &[2, 1, 2]), (4, 1)),
                    _ => (blocks(&[4, 4, 4], &[3, 3 + (u + j) % 2, 3]), (4, 3)),
                };
                s.emit(p, Mode::Exercise, &ex, |i| i, varied);
                s.emit(
                    p,
                    Mode::Test,
                    &[Block {
                        week: 3,
                        n: test.0,
                        k: test.1,
                    }],
                    |i| i + 5,
                    varied,
                );
            }
        }
        s.unit_start = unit_start(6);
        let steady = |i: usize| 120.0 + ((i % 3) as f64 - 1.0) * 4.0;
        let test_week = |n: usize, k: usize| [Block { week: 5, n, k }];
        s.emit(pool("S1102"), Mode::Exercise, &blocks(&[4, 3, 3, 3, 3], &[3, 3, 3, 3, 3]), |i| i, steady);
        s.emit(pool("S1102"), Mode::Test, &test_week(16, 15), |i| i, steady);
        s.emit(pool("S1205"), Mode::Exercise, &blocks(&[3, 3, 3, 3, 2], &[1, 1, 1, 1, 1]), |i| i, varied);
        s.emit(pool("S1205-S2106"), Mode::Exercise, &blocks(&[1, 1, 1, 1, 2], &[1, 0, 1, 0, 1]), |i| i, varied);
        s.emit(pool("S1205"), Mode::Test, &test_week(10, 9), |i| i + 3, varied);
        s.emit(pool("S1206"), Mode::Exercise, &blocks(&[4, 4, 4, 4, 4], &[1, 2, 3, 3, 4]), |i| i * 7, varied);
        s.emit(pool("S1206"), Mode::Test, &test_week(10, 9), |i| i * 5 + 1, varied);
        s.emit(pool("S2106"), Mode::Exercise, &blocks(&[3, 3, 2, 2, 2], &[2, 2, 2, 1, 2]), |i| i, varied);
        s.emit(pool("S2106"), Mode::Test, &test_week(12, 10), |i| i, varied);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in 1..cohort_size {
        let student = format!("stu-{p:04}");
        for (u, pool) in &pools {
            let plan = &STEVEN_UNITS[*u];
            peer_attempts(
                &mut rng,
                &student,
                pool,
                unit_start(*u),
                plan.weeks - 1,
                if pool.objectives.len() > 1 { (0, 1) } else { (1, 4) },
                if pool.objectives.len() > 1 { (0, 0) } else { (4, 8) },
                &mut records,
            );
        }
    }
    records.sort_by(|a, b| (a.timestamp, &a.student_id, &a.question_id).cmp(&(b.timestamp, &b.student_id, &b.question_id)));
    SynthOutput {
        graph,
        records,
        catalog,
        focal_student: FOCAL_STUDENT.to_owned(),
        focal_unit: "U7".to_owned(),
    }
}

const COHORT_UNITS: &[UnitPlan] = &[
    UnitPlan {
        id: "C1",
        title: "Course part one",
        objectives: &[
            ("C101", "Ratios"),
            ("C102", "Rates"),
            ("C103", "Percentages"),
            ("C104", "Proportional reasoning"),
            ("C105", "Scale drawings"),
        ],
        start_week: 0,
        weeks: 12,
    },
    UnitPlan {
        id: "C2",
        title: "Course part two",
        objectives: &[
            ("C201", "Expressions"),
            ("C202", "Equations"),
            ("C203", "Inequalities"),
            ("C204", "Linear relations"),
            ("C205", "Systems"),
        ],
        start_week: 12,
        weeks: 12,
    },
];

const COHORT_EDGES: &[(&str, &str)] = &[
    ("C101", "C102"),
    ("C102", "C103"),
    ("C103", "C104"),
    ("C104", "C105"),
    ("C105", "C201"),
    ("C201", "C202"),
    ("C202", "C203"),
    ("C203", "C204"),
    ("C204", "C205"),
];

fn cohort(seed: u64, cohort_size: usize) -> SynthOutput {
    let graph = graph_document(COHORT_UNITS, COHORT_EDGES);
    let mut catalog = QuestionCatalog::default();
    let mut pools = Vec::new();
    for (u, plan) in COHORT_UNITS.iter().enumerate() {
        for (id, _) in plan.objectives {
            let p = Pool::new(&[id], &mixed(6, 8, 6));
            p.register(&mut catalog);
            pools.push((u, p));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for s in 0..cohort_size {
        let student = format!("stu-{s:04}");
        for (u, pool) in &pools {
            let plan = &COHORT_UNITS[*u];
            // twelve weeks: eleven of practice, then the test week
            peer_attempts(
                &mut rng,
                &student,
                pool,
                base_date() + Duration::weeks(plan.start_week),
                plan.weeks - 1,
                (1, 2),
                (3, 4),
                &mut records,
            );
        }
    }
    records.sort_by(|a, b| (a.timestamp, &a.student_id, &a.question_id).cmp(&(b.timestamp, &b.student_id, &b.question_id)));
    SynthOutput {
        graph,
        records,
        catalog,
        focal_student: COHORT_FOCAL.to_owned(),
        focal_unit: "C2".to_owned(),
    }
}
