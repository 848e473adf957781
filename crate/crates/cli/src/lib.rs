pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod llm_client;
pub mod server;

pub use error::CliError;
