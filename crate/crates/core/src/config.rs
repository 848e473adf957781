use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formative::RewardConfig;
use crate::insight::DetectorConfig;

/// Which students make up the peer cohort. The focal student is always
/// included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortScope {
    #[default]
    All,
    Students(Vec<String>),
}

impl CohortScope {
    pub fn admits(&self, student: &str, focal: &str) -> bool {
        match self {
            CohortScope::All => true,
            CohortScope::Students(list) => student == focal || list.iter().any(|s| s == student),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Template,
    Llm,
}

impl std::str::FromStr for BackendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "template" => Ok(BackendMode::Template),
            "llm" => Ok(BackendMode::Llm),
            other => Err(Error::Config(format!("unknown backend `{other}` (expected template|llm)"))),
        }
    }
}

/// Every tunable of the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub interval_width_days: u32,
    /// Fixed interval origin; otherwise midnight of each unit's earliest record.
    pub origin: Option<DateTime<Utc>>,
    /// Fixed interval count; otherwise enough to cover the latest record.
    pub intervals: Option<usize>,
    pub cohort_scope: CohortScope,
    pub reward_weights: RewardConfig,
    /// Mastery below this flags an objective for attention.
    pub mastery_threshold: f64,
    /// Ancestor mastery below this flags the dependent objective.
    pub ancestor_threshold: f64,
    /// Mastery at or above this earns reinforcement feedback.
    pub reinforce_band: f64,
    /// Mastery at or above this (and below `reinforce_band`) earns medal-and-mission feedback.
    pub medal_band: f64,
    /// Velocity below this demotes reinforcement to medal-and-mission.
    pub velocity_demotion: f64,
    pub insight_floor: f64,
    pub top_k: usize,
    pub permutations: usize,
    pub seed: u64,
    /// Ancestor findings cited per objective in a QA answer.
    pub ancestor_report_cap: usize,
    pub backend: BackendMode,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub llm_max_in_flight: usize,
    pub cache_dir: PathBuf,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            interval_width_days: 7,
            origin: None,
            intervals: None,
            cohort_scope: CohortScope::All,
            reward_weights: RewardConfig::default(),
            mastery_threshold: 0.6,
            ancestor_threshold: 0.6,
            reinforce_band: 0.85,
            medal_band: 0.6,
            velocity_demotion: -0.05,
            insight_floor: 0.8,
            top_k: 3,
            permutations: 1000,
            seed: 7919,
            ancestor_report_cap: 3,
            backend: BackendMode::Template,
            llm_endpoint: None,
            llm_model: None,
            llm_max_in_flight: 4,
            cache_dir: PathBuf::from(".journey-cache"),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("mastery_threshold", self.mastery_threshold),
            ("ancestor_threshold", self.ancestor_threshold),
            ("reinforce_band", self.reinforce_band),
            ("medal_band", self.medal_band),
            ("insight_floor", self.insight_floor),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.medal_band > self.reinforce_band {
            return Err(Error::Config("medal_band must not exceed reinforce_band".into()));
        }
        if !self.velocity_demotion.is_finite() {
            return Err(Error::Config("velocity_demotion must be finite".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.permutations == 0 {
            return Err(Error::Config("permutations must be at least 1".into()));
        }
        if self.interval_width_days == 0 {
            return Err(Error::Config("interval_width_days must be positive".into()));
        }
        if self.intervals == Some(0) {
            return Err(Error::Config("intervals must be positive".into()));
        }
        if self.llm_max_in_flight == 0 {
            return Err(Error::Config("llm_max_in_flight must be at least 1".into()));
        }
        self.reward_weights.validate()
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            floor: self.insight_floor,
            permutations: self.permutations,
            seed: self.seed,
        }
    }

    /// The subset of settings an aggregation cache entry depends on.
    pub fn aggregation(&self) -> AggregationSettings {
        AggregationSettings {
            interval_width_days: self.interval_width_days,
            origin: self.origin,
            intervals: self.intervals,
            cohort_scope: self.cohort_scope.clone(),
            reward_weights: self.reward_weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSettings {
    pub interval_width_days: u32,
    pub origin: Option<DateTime<Utc>>,
    pub intervals: Option<usize>,
    pub cohort_scope: CohortScope,
    pub reward_weights: RewardConfig,
}
