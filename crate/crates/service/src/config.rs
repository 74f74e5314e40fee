use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::log::DEFAULT_SNAPSHOT_EVERY;
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorConfig {
    pub token: String,
    #[serde(alias = "id")]
    pub annotator_id: String,
    /// Restricts the annotator to one schedule round.
    #[serde(default)]
    pub round: Option<u32>,
}

/// Annotator roster, usually read from TOML:
///
/// ```toml
/// snapshot_every = 100
///
/// [[annotator]]
/// id = "ann1"
/// token = "…"
/// round = 1
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u64,
    #[serde(default, rename = "annotator")]
    pub annotators: Vec<AnnotatorConfig>,
}

fn default_snapshot_every() -> u64 {
    DEFAULT_SNAPSHOT_EVERY
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            annotators: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let mut tokens = HashSet::new();
        let mut ids = HashSet::new();
        for a in &self.annotators {
            if a.token.trim().is_empty() {
                return Err(ServiceError::Config(format!("annotator `{}` has an empty token", a.annotator_id)));
            }
            if !tokens.insert(a.token.as_str()) {
                return Err(ServiceError::Config(format!("token of `{}` is shared", a.annotator_id)));
            }
            if !ids.insert(a.annotator_id.as_str()) {
                return Err(ServiceError::Config(format!("annotator `{}` listed twice", a.annotator_id)));
            }
        }
        Ok(())
    }
}
