//! Layered configuration: defaults, then a TOML file, then `JOURNEY_*`
//! environment variables, then command-line flags. Later layers win.

use std::path::{Path, PathBuf};

use journey_core::config::EngineConfig;
use toml::{Table, Value};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "JOURNEY_";

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "JOURNEY_CONFIG";

/// Environment variable carrying the model API key. Never stored in files.
pub const API_KEY_ENV: &str = "JOURNEY_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Text,
    /// `all` or a comma-separated student list.
    Cohort,
    /// `easy,medium,hard`.
    Weights,
}

/// Every key that may be set from the environment or a flag. `optional`
/// keys are cleared by an empty value or `none`.
const KEYS: &[(&str, Kind, bool)] = &[
    ("interval_width_days", Kind::Int, false),
    ("origin", Kind::Text, true),
    ("intervals", Kind::Int, true),
    ("cohort_scope", Kind::Cohort, false),
    ("reward_weights", Kind::Weights, false),
    ("mastery_threshold", Kind::Float, false),
    ("ancestor_threshold", Kind::Float, false),
    ("reinforce_band", Kind::Float, false),
    ("medal_band", Kind::Float, false),
    ("velocity_demotion", Kind::Float, false),
    ("insight_floor", Kind::Float, false),
    ("top_k", Kind::Int, false),
    ("permutations", Kind::Int, false),
    ("seed", Kind::Int, false),
    ("ancestor_report_cap", Kind::Int, false),
    ("backend", Kind::Text, false),
    ("llm_endpoint", Kind::Text, true),
    ("llm_model", Kind::Text, true),
    ("llm_max_in_flight", Kind::Int, false),
    ("cache_dir", Kind::Text, false),
];

pub fn known_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|k| k.0)
}

pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())
}

fn parse_value(key: &str, raw: &str) -> Result<Option<Value>, CliError> {
    let &(_, kind, optional) = KEYS
        .iter()
        .find(|k| k.0 == key)
        .ok_or_else(|| CliError::Config(format!("unknown setting `{key}`")))?;
    let raw = raw.trim();
    if optional && (raw.is_empty() || raw.eq_ignore_ascii_case("none")) {
        return Ok(None);
    }
    let bad = |what: &str| CliError::Config(format!("{key}: `{raw}` is not {what}"));
    let v = match kind {
        Kind::Int => Value::Integer(raw.parse().map_err(|_| bad("an integer"))?),
        Kind::Float => Value::Float(raw.parse().map_err(|_| bad("a number"))?),
        Kind::Text => Value::String(raw.to_owned()),
        Kind::Cohort if raw.eq_ignore_ascii_case("all") => Value::String("all".into()),
        Kind::Cohort => {
            let ids: Vec<Value> = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Value::String(s.to_owned()))
                .collect();
            if ids.is_empty() {
                return Err(bad("`all` or a student list"));
            }
            let mut t = Table::new();
            t.insert("students".into(), Value::Array(ids));
            Value::Table(t)
        }
        Kind::Weights => {
            let parts: Vec<f64> = raw
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("three comma-separated numbers"))?;
            let [easy, medium, hard] = parts[..] else {
                return Err(bad("three comma-separated numbers"));
            };
            let mut t = Table::new();
            t.insert("easy".into(), Value::Float(easy));
            t.insert("medium".into(), Value::Float(medium));
            t.insert("hard".into(), Value::Float(hard));
            Value::Table(t)
        }
    };
    Ok(Some(v))
}

/// One layer of `key = value` overrides; `None` clears an optional key.
#[derive(Debug, Clone, Default)]
pub struct Overrides(Vec<(String, Option<Value>)>);

impl Overrides {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let v = parse_value(key, raw)?;
        self.0.push((key.to_owned(), v));
        Ok(())
    }

    /// Reads every `JOURNEY_<KEY>` variable through `lookup`.
    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let mut out = Overrides::default();
        for key in known_keys() {
            if let Some(raw) = lookup(&env_name(key)) {
                out.set(key, &raw)
                    .map_err(|e| CliError::Config(format!("{}: {e}", env_name(key))))?;
            }
        }
        Ok(out)
    }

    /// Parses `key=value` pairs as given to `--set`.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a str>) -> Result<Self, CliError> {
        let mut out = Overrides::default();
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("`{pair}` is not key=value")))?;
            out.set(k.trim(), v)?;
        }
        Ok(out)
    }

    fn apply(&self, table: &mut Table) {
        for (k, v) in &self.0 {
            match v {
                Some(v) => table.insert(k.clone(), v.clone()),
                None => table.remove(k),
            };
        }
    }
}

pub fn read_file(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Merges the layers in precedence order and validates the result.
pub fn resolve(file: Option<&Table>, env: &Overrides, flags: &Overrides) -> Result<EngineConfig, CliError> {
    let defaults = Value::try_from(EngineConfig::default()).map_err(|e| CliError::Config(e.to_string()))?;
    let Value::Table(mut table) = defaults else {
        unreachable!("config serializes to a table")
    };
    if let Some(file) = file {
        for (k, v) in file {
            table.insert(k.clone(), v.clone());
        }
    }
    env.apply(&mut table);
    flags.apply(&mut table);
    let config: EngineConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Resolves the configuration for a process: `--config` or `JOURNEY_CONFIG`
/// names the file, the real environment supplies the middle layer.
pub fn load(config_path: Option<&PathBuf>, flags: &Overrides) -> Result<EngineConfig, CliError> {
    let lookup = |name: &str| std::env::var(name).ok();
    let path = config_path.cloned().or_else(|| lookup(CONFIG_ENV).map(PathBuf::from));
    let file = path.as_deref().map(read_file).transpose()?;
    resolve(file.as_ref(), &Overrides::from_env(lookup)?, flags)
}
