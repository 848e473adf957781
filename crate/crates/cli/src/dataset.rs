//! The on-disk dataset: a directory holding the objective graph, the
//! attempt records as NDJSON, and the question catalog.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use journey_core::cache::atomic_write;
use journey_core::config::EngineConfig;
use journey_core::model::{read_records, write_records, AttemptRecord, ObjectiveGraph, QuestionCatalog};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const GRAPH_FILE: &str = "graph.json";
pub const RECORDS_FILE: &str = "records.ndjson";
pub const CATALOG_FILE: &str = "catalog.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "journey-dataset/1";

/// Describes how a dataset was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub source: String,
    pub students: usize,
    pub records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_student: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_unit: Option<String>,
}

pub struct Dataset {
    pub graph: ObjectiveGraph,
    pub records: Vec<AttemptRecord>,
    pub catalog: QuestionCatalog,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_owned(),
        source,
    })
}

pub fn read_graph(path: &Path) -> Result<ObjectiveGraph, CliError> {
    Ok(ObjectiveGraph::from_json(&read_text(path)?)?)
}

pub fn read_record_file(path: &Path) -> Result<Vec<AttemptRecord>, CliError> {
    let f = fs::File::open(path).map_err(|source| CliError::Input {
        path: path.to_owned(),
        source,
    })?;
    Ok(read_records(BufReader::new(f))?)
}

impl Dataset {
    /// Loads a dataset directory. A missing catalog is rebuilt from the
    /// difficulty labels on the records.
    pub fn load(dir: &Path) -> Result<Dataset, CliError> {
        let graph = read_graph(&dir.join(GRAPH_FILE))?;
        let records = read_record_file(&dir.join(RECORDS_FILE))?;
        let catalog_path = dir.join(CATALOG_FILE);
        let catalog = if catalog_path.exists() {
            QuestionCatalog::from_json(&read_text(&catalog_path)?)?
        } else {
            QuestionCatalog::from_records(&records)?
        };
        journey_core::model::validate_records(&records, &graph)?;
        Ok(Dataset { graph, records, catalog })
    }

    pub fn save(&self, dir: &Path, manifest: &Manifest) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_owned(),
            source,
        })?;
        let files = [
            (GRAPH_FILE, serde_json::to_string_pretty(&self.graph.to_document()).map_err(journey_core::Error::from)?),
            (RECORDS_FILE, write_records(&self.records)?),
            (CATALOG_FILE, serde_json::to_string_pretty(&self.catalog).map_err(journey_core::Error::from)?),
            (MANIFEST_FILE, serde_json::to_string_pretty(manifest).map_err(journey_core::Error::from)?),
        ];
        let mut out = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            atomic_write(&path, body.as_bytes())?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn input_hash(&self, config: &EngineConfig) -> Result<String, CliError> {
        Ok(journey_core::cache::input_hash(
            &self.graph,
            &self.records,
            &self.catalog,
            &config.aggregation(),
        )?)
    }

    pub fn student_count(&self) -> usize {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.student_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}
