//! Pipeline driver: configuration, one function per stage, and the
//! resumable end-to-end `run`.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod config;
pub mod io;
pub mod pipeline;
pub mod stages;

pub use config::RunConfig;
pub use pipeline::{run, RunOptions, RunSummary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Data(String),
    #[error("stage `{stage}` failed: {message}{}", key_list(keys))]
    Stage {
        stage: String,
        message: String,
        /// Items (texts, slots, components) the failure concerns.
        keys: Vec<String>,
    },
}

fn key_list(keys: &[String]) -> String {
    const SHOWN: usize = 20;
    if keys.is_empty() {
        return String::new();
    }
    let mut s = format!(" [{}", keys[..keys.len().min(SHOWN)].join(", "));
    if keys.len() > SHOWN {
        s.push_str(&format!(", … {} more", keys.len() - SHOWN));
    }
    s.push(']');
    s
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Attaches a stage name unless the error already carries one.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ CliError::Stage { .. } => e,
            e @ CliError::Config(_) => e,
            other => CliError::Stage {
                stage: stage.to_string(),
                message: other.to_string(),
                keys: Vec::new(),
            },
        }
    }

    /// 2 for configuration errors, 3 for data and stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}
