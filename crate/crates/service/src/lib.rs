//! Annotation service for best-worst scaling: hands tuples of anonymized
//! texts to annotators, records judgments in an append-only log, queues
//! disagreements for arbitration and exports the resulting comparison pairs.
//!
//! State is event-sourced ([`state`]); every write goes through one
//! serialized appender ([`log`]) while reads use lock-free snapshots.

use std::collections::HashMap;
use std::path::Path;

use biaseval_core::bws::Tuple;
use biaseval_core::corpus::{read_jsonl, CorpusError, Discourse};
use thiserror::Error;

pub mod config;
pub mod log;
pub mod server;
pub mod state;

pub use config::{AnnotatorConfig, ServiceConfig};
pub use server::{ApiError, Service};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("text `{0}` is scheduled but missing from the corpus")]
    MissingText(String),
    #[error("text `{0}` is scheduled but not anonymized")]
    NotAnonymized(String),
    #[error("tuple {0} has more texts than the interface can label")]
    TupleTooLarge(u32),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Log(#[from] log::LogError),
}

/// Reads a JSON tuple schedule.
pub fn load_schedule(path: impl AsRef<Path>) -> Result<Vec<Tuple>, ServiceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Schedule(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ServiceError::Schedule(format!("{}: {e}", path.display())))
}

/// Bodies of the scheduled texts, keyed by discourse id. Every scheduled
/// text must be present and anonymized.
pub fn scheduled_bodies(tuples: &[Tuple], corpus: &[Discourse]) -> Result<HashMap<String, String>, ServiceError> {
    let by_id: HashMap<String, &Discourse> = corpus.iter().map(|d| (d.id(), d)).collect();
    let mut bodies = HashMap::new();
    for id in tuples.iter().flat_map(|t| &t.text_ids) {
        let d = by_id.get(id).ok_or_else(|| ServiceError::MissingText(id.clone()))?;
        if !d.anonymized {
            return Err(ServiceError::NotAnonymized(id.clone()));
        }
        bodies.insert(id.clone(), d.body.clone());
    }
    Ok(bodies)
}

/// Loads schedule and corpus files and opens the service over `data_dir`.
pub fn open(
    schedule: impl AsRef<Path>,
    corpus: impl AsRef<Path>,
    config: ServiceConfig,
    data_dir: Option<&Path>,
) -> Result<Service, ServiceError> {
    let tuples = load_schedule(schedule)?;
    let discourses: Vec<Discourse> = read_jsonl(corpus)?;
    let bodies = scheduled_bodies(&tuples, &discourses)?;
    Service::new(tuples, bodies, config, data_dir)
}

/// Serves the HTTP API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, service: Service) -> std::io::Result<()> {
    axum::serve(listener, service.router()).await
}
