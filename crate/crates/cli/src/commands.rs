use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use journey_core::cache::{AggregationContext, CacheEntry, CacheStore};
use journey_core::config::{BackendMode, EngineConfig};
use journey_core::formative::{diagnose, ObjectiveDiagnosis};
use journey_core::insight::{mine_top_k, unit_frame, Insight};
use journey_core::llm::{run_bounded, student_token, LlmClient};
use journey_core::model::{normalize_records, validate_graph, GraphDocument, ModeFilter, QuestionCatalog};
use journey_core::pedagogy::{generate_feedback, FeedbackItem};
use journey_core::story::{generate_report, NarrativeBackend, Templates};
use journey_core::synth::{synth, Scenario};
use serde::Serialize;

use crate::config::{self, Overrides, API_KEY_ENV};
use crate::dataset::{read_graph, read_record_file, Dataset, Manifest, MANIFEST_SCHEMA};
use crate::error::CliError;
use crate::llm_client::HttpLlmClient;

pub const INSIGHTS_SCHEMA: &str = "journey-insights/1";
pub const DIAGNOSIS_SCHEMA: &str = "journey-diagnosis/1";

/// Default seed for `synth`.
pub const SYNTH_SEED: u64 = 20250203;

#[derive(Debug, Parser)]
#[command(name = "journey", version, about = "Narrative learning reports from attempt records")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file. Falls back to $JOURNEY_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override a config key, e.g. `--set top_k=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Cache directory (config key `cache_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<String>,
}

#[derive(Debug, Args)]
pub struct Focus {
    /// Dataset directory written by `synth` or `ingest`.
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub data: PathBuf,

    #[arg(long)]
    pub student: String,

    #[arg(long)]
    pub unit: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    All,
    Exercise,
    Test,
}

impl From<ModeArg> for ModeFilter {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::All => ModeFilter::All,
            ModeArg::Exercise => ModeFilter::Exercise,
            ModeArg::Test => ModeFilter::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Template,
    Llm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset.
    Synth {
        #[arg(long, default_value = "steven")]
        scenario: String,
        #[arg(long, default_value_t = SYNTH_SEED)]
        seed: u64,
        /// Students in the cohort, the focal one included.
        #[arg(long, default_value_t = 200)]
        cohort_size: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Validate and normalize a graph and record file into a dataset directory.
    Ingest {
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        /// Attempt records, one JSON object per line.
        #[arg(long, value_name = "FILE")]
        records: PathBuf,
        /// Question catalog; rebuilt from record labels when absent.
        #[arg(long, value_name = "FILE")]
        catalog: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Build cache entries for students and units.
    Aggregate {
        #[arg(long, default_value = ".", value_name = "DIR")]
        data: PathBuf,
        /// Repeatable.
        #[arg(long, required_unless_present = "all_students")]
        student: Vec<String>,
        #[arg(long, conflicts_with = "student")]
        all_students: bool,
        /// Repeatable; every unit when absent.
        #[arg(long)]
        unit: Vec<String>,
    },
    /// Ranked insights for a cached (student, unit) as JSON.
    Mine {
        #[command(flatten)]
        focus: Focus,
        /// Insights to keep (config key `top_k`).
        #[arg(long)]
        k: Option<usize>,
        /// Restrict mining to one mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Per-objective diagnosis and feedback as JSON.
    Diagnose {
        #[command(flatten)]
        focus: Focus,
    },
    /// Generate the twelve-stage report document.
    Report {
        #[command(flatten)]
        focus: Focus,
        /// Narrative backend (config key `backend`).
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Narrative template library (JSON).
        #[arg(long, value_name = "FILE")]
        templates: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Serve the report and question-answering API.
    Serve {
        #[arg(long, default_value = ".", value_name = "DIR")]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, value_name = "FILE")]
        templates: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
pub struct MineOutput {
    pub schema: &'static str,
    pub student_token: String,
    pub unit_id: String,
    pub k: usize,
    pub modes: Vec<ModeFilter>,
    pub insights: Vec<Insight>,
}

#[derive(Debug, Serialize)]
pub struct DiagnoseOutput {
    pub schema: &'static str,
    pub student_token: String,
    pub unit_id: String,
    pub diagnoses: Vec<ObjectiveDiagnosis>,
    pub feedback: Vec<FeedbackItem>,
}

fn flag_overrides(cli: &Cli) -> Result<Overrides, CliError> {
    let mut flags = Overrides::from_pairs(cli.global.set.iter().map(String::as_str))?;
    if let Some(dir) = &cli.global.cache_dir {
        flags.set("cache_dir", dir)?;
    }
    match &cli.command {
        Command::Mine { k: Some(k), .. } => flags.set("top_k", &k.to_string())?,
        Command::Report { backend: Some(b), .. } => {
            flags.set("backend", if matches!(b, BackendArg::Llm) { "llm" } else { "template" })?
        }
        _ => {}
    }
    Ok(flags)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = config::load(cli.global.config.as_ref(), &flag_overrides(&cli)?)?;
    match cli.command {
        Command::Synth {
            scenario,
            seed,
            cohort_size,
            out,
        } => {
            let scenario: Scenario = scenario.parse().map_err(|e: journey_core::Error| CliError::Config(e.to_string()))?;
            let m = run_synth(scenario, seed, cohort_size, &out)?;
            print_json(&m)
        }
        Command::Ingest {
            graph,
            records,
            catalog,
            out,
        } => print_json(&run_ingest(&graph, &records, catalog.as_deref(), &out)?),
        Command::Aggregate {
            data,
            student,
            all_students,
            unit,
        } => {
            let ds = Dataset::load(&data)?;
            let students = if all_students { None } else { Some(student) };
            let written = run_aggregate(&ds, &config, students, &unit)?;
            print_json(&serde_json::json!({
                "cache_dir": config.cache_dir,
                "entries": written,
            }))
        }
        Command::Mine { focus, mode, .. } => {
            let ds = Dataset::load(&focus.data)?;
            let entry = fresh_entry(&ds, &config, &focus.student, &focus.unit)?;
            print_json(&run_mine(&ds, &entry, &config, mode.map(Into::into))?)
        }
        Command::Diagnose { focus } => {
            let ds = Dataset::load(&focus.data)?;
            let entry = fresh_entry(&ds, &config, &focus.student, &focus.unit)?;
            print_json(&run_diagnose(&ds, &entry, &config)?)
        }
        Command::Report {
            focus, templates, out, ..
        } => {
            let ds = Dataset::load(&focus.data)?;
            let entry = fresh_entry(&ds, &config, &focus.student, &focus.unit)?;
            let templates = load_templates(templates.as_deref())?;
            let client = llm_client(&config)?;
            let backend = narrative_backend(&config, client.as_deref());
            let report = generate_report(&ds.graph, &entry, &config, &backend, &templates, now())?;
            emit(out.as_deref(), &report.to_json()?)
        }
        Command::Serve { data, addr, templates } => {
            let templates = load_templates(templates.as_deref())?;
            crate::server::serve(&data, &addr, config, templates)
        }
    }
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn run_synth(scenario: Scenario, seed: u64, cohort_size: usize, out: &Path) -> Result<Manifest, CliError> {
    let s = synth(scenario, seed, cohort_size)?;
    let graph = journey_core::model::ObjectiveGraph::try_from(s.graph)?;
    let ds = Dataset {
        graph,
        records: s.records,
        catalog: s.catalog,
    };
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        source: format!("synth:{}:{seed}", scenario_name(scenario)),
        students: ds.student_count(),
        records: ds.records.len(),
        focal_student: Some(s.focal_student),
        focal_unit: Some(s.focal_unit),
    };
    ds.save(out, &manifest)?;
    Ok(manifest)
}

fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Steven => "steven",
        Scenario::Cohort => "cohort",
    }
}

/// Validates the graph (every violation is reported), then the records,
/// and writes the normalized dataset.
pub fn run_ingest(graph: &Path, records: &Path, catalog: Option<&Path>, out: &Path) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(graph).map_err(|source| CliError::Input {
        path: graph.to_owned(),
        source,
    })?;
    let doc = GraphDocument::from_json(&text)?;
    let report = validate_graph(&doc);
    if !report.is_valid() {
        let lines: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("  {}", serde_json::to_string(v).unwrap_or_else(|_| format!("{v:?}"))))
            .collect();
        return Err(journey_core::Error::InvalidData(format!("graph is invalid:\n{}", lines.join("\n"))).into());
    }
    let graph = read_graph(graph)?;
    let mut recs = read_record_file(records)?;
    journey_core::model::validate_records(&recs, &graph)?;
    normalize_records(&mut recs);
    let mut cat = match catalog {
        Some(p) => QuestionCatalog::from_json(&std::fs::read_to_string(p).map_err(|source| CliError::Input {
            path: p.to_owned(),
            source,
        })?)?,
        None => QuestionCatalog::default(),
    };
    cat.absorb_records(&recs)?;
    let ds = Dataset {
        graph,
        records: recs,
        catalog: cat,
    };
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        source: format!("ingest:{}", records.display()),
        students: ds.student_count(),
        records: ds.records.len(),
        focal_student: None,
        focal_unit: None,
    };
    ds.save(out, &manifest)?;
    Ok(manifest)
}

/// Refreshes the requested entries and writes them with one index swap.
/// `students = None` means every student in the records.
pub fn run_aggregate(
    ds: &Dataset,
    config: &EngineConfig,
    students: Option<Vec<String>>,
    units: &[String],
) -> Result<Vec<String>, CliError> {
    let ctx = AggregationContext::new(&ds.graph, &ds.records, Some(&ds.catalog), config.aggregation())?;
    let students: Vec<String> = students.unwrap_or_else(|| ctx.students().map(str::to_owned).collect());
    let units: Vec<String> = if units.is_empty() {
        ds.graph.units().iter().map(|u| u.id.clone()).collect()
    } else {
        units.to_vec()
    };
    let pairs: Vec<(String, String)> = students
        .iter()
        .flat_map(|s| units.iter().map(move |u| (s.clone(), u.clone())))
        .collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let entries = run_bounded(pairs, threads, |(s, u)| ctx.refresh(&s, &u))
        .into_iter()
        .collect::<journey_core::Result<Vec<CacheEntry>>>()?;
    CacheStore::new(&config.cache_dir).write_many(&entries)?;
    Ok(entries.iter().map(|e| format!("{}/{}", e.student_id, e.unit_id)).collect())
}

/// Reads an entry and rejects it when the dataset or settings changed.
pub fn fresh_entry(ds: &Dataset, config: &EngineConfig, student: &str, unit: &str) -> Result<CacheEntry, CliError> {
    ds.graph.unit(unit)?;
    Ok(CacheStore::new(&config.cache_dir).read_fresh(student, unit, &ds.input_hash(config)?)?)
}

pub fn run_mine(ds: &Dataset, entry: &CacheEntry, config: &EngineConfig, mode: Option<ModeFilter>) -> Result<MineOutput, CliError> {
    let mut frame = unit_frame(entry, &ds.graph)?;
    let modes = match mode {
        Some(m) => vec![m],
        None => ModeFilter::ALL.to_vec(),
    };
    if mode.is_some() {
        frame = frame.restrict_modes(&modes);
    }
    Ok(MineOutput {
        schema: INSIGHTS_SCHEMA,
        student_token: student_token(&entry.student_id),
        unit_id: entry.unit_id.clone(),
        k: config.top_k,
        modes,
        insights: mine_top_k(&frame, config.top_k, &config.detector()),
    })
}

pub fn run_diagnose(ds: &Dataset, entry: &CacheEntry, config: &EngineConfig) -> Result<DiagnoseOutput, CliError> {
    let diagnoses = diagnose(&entry.student_id, &entry.unit_id, &ds.graph, Some(entry), config)?;
    let feedback = generate_feedback(&diagnoses, config);
    Ok(DiagnoseOutput {
        schema: DIAGNOSIS_SCHEMA,
        student_token: student_token(&entry.student_id),
        unit_id: entry.unit_id.clone(),
        diagnoses,
        feedback,
    })
}

pub fn load_templates(path: Option<&Path>) -> Result<Templates, CliError> {
    match path {
        None => Ok(Templates::builtin().clone()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Input {
                path: p.to_owned(),
                source,
            })?;
            Ok(Templates::from_json(&text)?)
        }
    }
}

/// The model client for the configured backend; `None` in template mode.
pub fn llm_client(config: &EngineConfig) -> Result<Option<Box<dyn LlmClient>>, CliError> {
    if config.backend != BackendMode::Llm {
        return Ok(None);
    }
    let endpoint = config
        .llm_endpoint
        .clone()
        .ok_or_else(|| CliError::Config("backend `llm` needs llm_endpoint (JOURNEY_LLM_ENDPOINT)".into()))?;
    let model = config.llm_model.clone().unwrap_or_else(|| "default".into());
    Ok(Some(Box::new(HttpLlmClient::new(endpoint, model, std::env::var(API_KEY_ENV).ok()))))
}

pub fn narrative_backend<'a>(config: &EngineConfig, client: Option<&'a dyn LlmClient>) -> NarrativeBackend<'a> {
    match client {
        Some(client) => NarrativeBackend::Llm {
            client,
            max_in_flight: config.llm_max_in_flight,
        },
        None => NarrativeBackend::Template,
    }
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(journey_core::Error::from)?;
    emit(None, &text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
                    path: dir.to_owned(),
                    source,
                })?;
            }
            journey_core::cache::atomic_write(path, text.as_bytes())?;
            Ok(())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                // a closed pipe (`| head`) is not a failure
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(|source| CliError::Output {
                    path: PathBuf::from("<stdout>"),
                    source,
                }),
            }
        }
    }
}
