use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("unknown language `{0}` (expected zh or en)")]
    Language(String),
    #[error("unknown prompt id `{0}` (expected p1, p2 or p3)")]
    Prompt(String),
    #[error("malformed discourse id `{0}`")]
    DiscourseId(String),
}

/// Generation and annotation language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Zh,
    En,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::Zh, Language::En];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Zh => "zh",
            Language::En => "en",
        }
    }

    /// Similarity threshold above which a second generation round is
    /// considered a repeat of the first.
    pub fn default_merge_threshold(self) -> f64 {
        match self {
            Language::Zh => 0.7,
            Language::En => 0.8,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zh" => Ok(Language::Zh),
            "en" => Ok(Language::En),
            _ => Err(KeyError::Language(s.to_string())),
        }
    }
}

/// One of the three generation prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptId {
    P1,
    P2,
    P3,
}

impl PromptId {
    pub const ALL: [PromptId; 3] = [PromptId::P1, PromptId::P2, PromptId::P3];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptId::P1 => "p1",
            PromptId::P2 => "p2",
            PromptId::P3 => "p3",
        }
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptId {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p1" => Ok(PromptId::P1),
            "p2" => Ok(PromptId::P2),
            "p3" => Ok(PromptId::P3),
            _ => Err(KeyError::Prompt(s.to_string())),
        }
    }
}

/// Identifies one discourse slot: (country, prompt, temperature, language).
///
/// The string form `{language}-{prompt}-t{temperature}-{country}` is used as
/// the text id throughout scheduling, ranking and export, e.g.
/// `zh-p1-t0.3-afghanistan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscourseKey {
    pub country_id: String,
    pub prompt_id: PromptId,
    pub temperature: f64,
    pub language: Language,
}

impl DiscourseKey {
    pub fn new(
        country_id: impl Into<String>,
        prompt_id: PromptId,
        temperature: f64,
        language: Language,
    ) -> Self {
        Self {
            country_id: country_id.into(),
            prompt_id,
            temperature,
            language,
        }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Parses the string form produced by `Display`.
    pub fn parse_id(id: &str) -> Result<Self, KeyError> {
        let bad = || KeyError::DiscourseId(id.to_string());
        let mut parts = id.splitn(4, '-');
        let language = parts.next().ok_or_else(bad)?.parse()?;
        let prompt_id = parts.next().ok_or_else(bad)?.parse()?;
        let temperature = parts
            .next()
            .and_then(|t| t.strip_prefix('t'))
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(bad)?;
        let country_id = parts.next().filter(|c| !c.is_empty()).ok_or_else(bad)?;
        Ok(Self::new(country_id, prompt_id, temperature, language))
    }
}

impl fmt::Display for DiscourseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-t{}-{}",
            self.language, self.prompt_id, self.temperature, self.country_id
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discourse_id_round_trip() {
        let key = DiscourseKey::new("guinea-bissau", PromptId::P3, 0.3, Language::Zh);
        assert_eq!(key.id(), "zh-p3-t0.3-guinea-bissau");
        assert_eq!(DiscourseKey::parse_id(&key.id()).unwrap(), key);

        let zero = DiscourseKey::new("chad", PromptId::P1, 0.0, Language::En);
        assert_eq!(zero.id(), "en-p1-t0-chad");
        assert_eq!(DiscourseKey::parse_id("en-p1-t0-chad").unwrap(), zero);
    }

    #[test]
    fn rejects_garbage_ids() {
        assert!(DiscourseKey::parse_id("zh-p9-t0-chad").is_err());
        assert!(DiscourseKey::parse_id("zh-p1-0.3-chad").is_err());
        assert!(DiscourseKey::parse_id("zh-p1-t0.3-").is_err());
    }
}
