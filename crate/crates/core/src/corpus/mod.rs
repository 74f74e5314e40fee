//! Countries, prompts, discourse records and the merge/anonymize steps that
//! turn raw generations into the evaluated corpus.

mod anonymize;
mod registry;
mod similarity;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anonymize::{Anonymizer, Span, MASK_TOKEN};
pub use registry::{Country, Registry, ZH_PEOPLE_SUFFIX};
pub use similarity::{
    edit_distance, merge_aliases, merge_rounds, similarity, MergeThreshold, MERGE_SEPARATOR,
};
pub use store::{read_jsonl, write_jsonl, DiscourseStore};

use crate::lexmetrics::tokenize;
use crate::{DiscourseKey, KeyError, Language, PromptId};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("similarity threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("nothing to merge")]
    EmptyMerge,
    #[error("cannot merge discourses with different keys: {expected} vs {found}")]
    KeyMismatch { expected: String, found: String },
    #[error("country registry: {0}")]
    Registry(String),
    #[error("unknown country `{0}`")]
    UnknownCountry(String),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Temperatures used for the replication runs.
pub const REPLICATION_TEMPERATURES: [f64; 4] = [0.0, 0.3, 0.6, 0.9];

/// One generated text for a (country, prompt, temperature, language) slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discourse {
    #[serde(flatten)]
    pub key: DiscourseKey,
    pub body: String,
    pub rounds_merged: u32,
    #[serde(default)]
    pub anonymized: bool,
    #[serde(default)]
    pub token_count: usize,
    #[serde(default)]
    pub char_count: usize,
    /// Set when the model declined to answer; such texts are kept verbatim
    /// but excluded from metrics.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub refused: bool,
}

impl Discourse {
    pub fn new(key: DiscourseKey, body: impl Into<String>) -> Self {
        let mut d = Self {
            key,
            body: body.into(),
            rounds_merged: 1,
            anonymized: false,
            token_count: 0,
            char_count: 0,
            refused: false,
        };
        d.refresh_counts();
        d
    }

    pub fn id(&self) -> String {
        self.key.id()
    }

    pub fn refresh_counts(&mut self) {
        self.char_count = self.body.chars().count();
        self.token_count = tokenize(&self.body, self.key.language).len();
    }

    /// Folds a later generation round into this one.
    pub fn absorb_round(&mut self, round: &str, threshold: MergeThreshold) {
        self.body = merge_rounds(&self.body, round, threshold);
        self.rounds_merged += 1;
        self.refresh_counts();
    }

    pub fn anonymize_with(&mut self, anonymizer: &Anonymizer) {
        self.body = anonymizer.anonymize(&self.body);
        self.anonymized = true;
        self.refresh_counts();
    }
}

/// Number of discourse slots for a run configuration.
pub fn slot_count(countries: usize, prompts: usize, temperatures: usize, languages: usize) -> usize {
    countries * prompts * temperatures * languages
}

/// Enumerates discourse slots in a fixed order: language, prompt,
/// temperature, then registry order.
pub fn slots(
    registry: &Registry,
    prompts: &[PromptId],
    temperatures: &[f64],
    languages: &[Language],
) -> Vec<DiscourseKey> {
    let mut out = Vec::with_capacity(slot_count(
        registry.len(),
        prompts.len(),
        temperatures.len(),
        languages.len(),
    ));
    for &language in languages {
        for &prompt in prompts {
            for &t in temperatures {
                for c in registry.countries() {
                    out.push(DiscourseKey::new(c.id.clone(), prompt, t, language));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replication_cardinality() {
        let reg = Registry::bundled();
        let keys = slots(&reg, &PromptId::ALL, &REPLICATION_TEMPERATURES, &Language::ALL);
        assert_eq!(keys.len(), 4680);
        assert_eq!(slot_count(195, 3, 4, 2), 4680);
    }

    #[test]
    fn absorb_counts_rounds() {
        let key = DiscourseKey::new("chad", PromptId::P1, 0.0, Language::En);
        let mut d = Discourse::new(key, "Chadian people are kind.");
        let t = MergeThreshold::new(0.8).unwrap();
        d.absorb_round("Chadian people are kind.", t);
        assert_eq!(d.rounds_merged, 2);
        assert_eq!(d.body, "Chadian people are kind.");
        assert_eq!(d.token_count, 4);
    }

    #[test]
    fn json_shape() {
        let key = DiscourseKey::new("chad", PromptId::P2, 0.3, Language::Zh);
        let d = Discourse::new(key, "乍得人");
        let v: serde_json::Value = serde_json::to_value(&d).unwrap();
        for field in [
            "country_id",
            "prompt_id",
            "temperature",
            "language",
            "body",
            "rounds_merged",
            "anonymized",
        ] {
            assert!(v.get(field).is_some(), "missing {field}");
        }
        assert_eq!(v["prompt_id"], "p2");
        assert_eq!(v["language"], "zh");
        assert!(v.get("refused").is_none());
    }
}
