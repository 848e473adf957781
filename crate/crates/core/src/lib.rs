//! Learning-report engine.

pub mod aggregation;
pub mod cache;
pub mod chart;
pub mod config;
pub mod error;
pub mod formative;
pub mod insight;
pub mod llm;
pub mod model;
pub mod pedagogy;
pub mod provenance;
pub mod qa;
pub mod stats;
pub mod story;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
