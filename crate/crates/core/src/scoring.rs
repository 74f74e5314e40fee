//! Wire types and validation for external model-based scorers.
//!
//! A scorer is any service accepting `POST /score` with
//! `{"metric", "language", "texts"}` and answering `{"scores": [...]}`.
//! Scalar metrics answer numbers in `[0, 1]`; regard answers either a label
//! string or a `{negative, neutral, positive, other}` distribution. `null`
//! marks a text the scorer failed on.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::Language;

const BUNDLED_COMPAT: &str = include_str!("../data/metric_languages.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    /// Sentiment, 0.5 neutral, higher is more positive.
    SM,
    /// Hate speech probability.
    HS,
    /// Offensiveness probability.
    OF,
    /// Regard label.
    RG,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::SM, Metric::HS, Metric::OF, Metric::RG];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::SM => "SM",
            Metric::HS => "HS",
            Metric::OF => "OF",
            Metric::RG => "RG",
        }
    }

    pub fn is_scalar(self) -> bool {
        self != Metric::RG
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SM" => Ok(Metric::SM),
            "HS" => Ok(Metric::HS),
            "OF" => Ok(Metric::OF),
            "RG" => Ok(Metric::RG),
            _ => Err(ScoringError::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegardLabel {
    Negative,
    Neutral,
    Positive,
    Other,
}

impl RegardLabel {
    pub const ALL: [RegardLabel; 4] = [
        RegardLabel::Negative,
        RegardLabel::Neutral,
        RegardLabel::Positive,
        RegardLabel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegardLabel::Negative => "negative",
            RegardLabel::Neutral => "neutral",
            RegardLabel::Positive => "positive",
            RegardLabel::Other => "other",
        }
    }
}

impl FromStr for RegardLabel {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RegardLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ScoringError::UnknownMetric(s.to_string()))
    }
}

impl fmt::Display for RegardLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("unknown metric or label `{0}`")]
    UnknownMetric(String),
    #[error("metric {metric} is not available for language {language}")]
    Incompatible { metric: Metric, language: Language },
    #[error("scorer protocol violation: {reason}; payload: {payload}")]
    Protocol { reason: String, payload: String },
    #[error("no labels to summarise")]
    NoLabels,
    #[error("compatibility table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub metric: Metric,
    pub language: Language,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub scores: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreValue {
    Scalar(f64),
    Label(RegardLabel),
    /// The scorer could not score this text.
    Missing,
}

impl ScoreValue {
    pub fn scalar(self) -> Option<f64> {
        match self {
            ScoreValue::Scalar(v) => Some(v),
            _ => None,
        }
    }

    pub fn label(self) -> Option<RegardLabel> {
        match self {
            ScoreValue::Label(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_missing(self) -> bool {
        self == ScoreValue::Missing
    }
}

/// Which metrics apply to which language.
#[derive(Debug, Clone)]
pub struct Compatibility {
    allowed: BTreeSet<(Metric, Language)>,
}

impl Compatibility {
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_COMPAT.as_bytes()).expect("bundled table is valid")
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ScoringError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut allowed = BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ScoringError::Table(e.to_string()))?;
            let metric: Metric = rec.get(0).unwrap_or_default().parse()?;
            let language: Language = rec
                .get(1)
                .unwrap_or_default()
                .parse()
                .map_err(|e: crate::KeyError| ScoringError::Table(e.to_string()))?;
            allowed.insert((metric, language));
        }
        Ok(Self { allowed })
    }

    pub fn check(&self, metric: Metric, language: Language) -> Result<(), ScoringError> {
        if self.allowed.contains(&(metric, language)) {
            Ok(())
        } else {
            Err(ScoringError::Incompatible { metric, language })
        }
    }

    pub fn metrics_for(&self, language: Language) -> Vec<Metric> {
        self.allowed
            .iter()
            .filter(|(_, l)| *l == language)
            .map(|(m, _)| *m)
            .collect()
    }
}

const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// Converts a raw scorer response into one value per requested text.
///
/// Any structural problem is a hard error carrying the offending payload;
/// `null` entries become [`ScoreValue::Missing`].
pub fn decode_response(
    req: &ScoreRequest,
    resp: &WireResponse,
) -> Result<Vec<ScoreValue>, ScoringError> {
    let violation = |reason: String, payload: &Value| ScoringError::Protocol {
        reason,
        payload: payload.to_string(),
    };
    if resp.scores.len() != req.texts.len() {
        return Err(ScoringError::Protocol {
            reason: format!(
                "expected {} scores, got {}",
                req.texts.len(),
                resp.scores.len()
            ),
            payload: serde_json::to_string(resp).unwrap_or_default(),
        });
    }
    resp.scores
        .iter()
        .enumerate()
        .map(|(i, v)| match (req.metric.is_scalar(), v) {
            (_, Value::Null) => Ok(ScoreValue::Missing),
            (true, Value::Number(n)) => {
                let x = n.as_f64().unwrap_or(f64::NAN);
                if (0.0..=1.0).contains(&x) {
                    Ok(ScoreValue::Scalar(x))
                } else {
                    Err(violation(format!("score {i} outside [0, 1]"), v))
                }
            }
            (false, Value::String(s)) => s
                .parse::<RegardLabel>()
                .map(ScoreValue::Label)
                .map_err(|_| violation(format!("score {i} is not a regard label"), v)),
            (false, Value::Object(map)) => {
                let mut best: Option<(RegardLabel, f64)> = None;
                let mut total = 0.0;
                for label in RegardLabel::ALL {
                    let p = map
                        .get(label.as_str())
                        .and_then(Value::as_f64)
                        .ok_or_else(|| violation(format!("score {i} lacks `{label}`"), v))?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(violation(format!("score {i} has probability outside [0, 1]"), v));
                    }
                    total += p;
                    if best.is_none_or(|(_, b)| p > b) {
                        best = Some((label, p));
                    }
                }
                if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
                    return Err(violation(format!("score {i} distribution sums to {total}"), v));
                }
                Ok(ScoreValue::Label(best.expect("four labels").0))
            }
            _ => Err(violation(
                format!("score {i} has the wrong type for {}", req.metric),
                v,
            )),
        })
        .collect()
}

/// Share of each regard label, in [`RegardLabel::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegardProportions {
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
    pub other: f64,
}

impl RegardProportions {
    pub fn get(&self, label: RegardLabel) -> f64 {
        match label {
            RegardLabel::Negative => self.negative,
            RegardLabel::Neutral => self.neutral,
            RegardLabel::Positive => self.positive,
            RegardLabel::Other => self.other,
        }
    }

    pub fn sum(&self) -> f64 {
        self.negative + self.neutral + self.positive + self.other
    }
}

pub fn regard_proportions(labels: &[RegardLabel]) -> Result<RegardProportions, ScoringError> {
    if labels.is_empty() {
        return Err(ScoringError::NoLabels);
    }
    let n = labels.len() as f64;
    let share = |l: RegardLabel| labels.iter().filter(|&&x| x == l).count() as f64 / n;
    Ok(RegardProportions {
        negative: share(RegardLabel::Negative),
        neutral: share(RegardLabel::Neutral),
        positive: share(RegardLabel::Positive),
        other: share(RegardLabel::Other),
    })
}
