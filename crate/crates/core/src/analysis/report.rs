use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scoring::{regard_proportions, RegardLabel, RegardProportions};
use crate::{Language, PromptId};

/// Measured quantity of a report row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReportMetric {
    /// Moving-average type-token ratio (lexical richness).
    RC,
    SM,
    HS,
    OF,
    RG,
    #[serde(rename = "bws-score")]
    BwsScore,
    #[serde(rename = "direct-score")]
    DirectScore,
}

impl ReportMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportMetric::RC => "RC",
            ReportMetric::SM => "SM",
            ReportMetric::HS => "HS",
            ReportMetric::OF => "OF",
            ReportMetric::RG => "RG",
            ReportMetric::BwsScore => "bws-score",
            ReportMetric::DirectScore => "direct-score",
        }
    }
}

impl fmt::Display for ReportMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use ReportMetric::*;
        [RC, SM, HS, OF, RG, BwsScore, DirectScore]
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown report metric `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportValue {
    Number(f64),
    Label(RegardLabel),
    Missing,
}

impl ReportValue {
    pub fn number(self) -> Option<f64> {
        match self {
            ReportValue::Number(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_missing(self) -> bool {
        matches!(self, ReportValue::Missing)
    }
}

impl From<Option<f64>> for ReportValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(ReportValue::Missing, ReportValue::Number)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub country_id: String,
    pub prompt_id: PromptId,
    pub temperature: f64,
    pub language: Language,
    pub metric: ReportMetric,
    pub value: ReportValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyField {
    Country,
    Prompt,
    Temperature,
    Language,
    Metric,
}

impl KeyField {
    fn of(self, row: &ReportRow) -> String {
        match self {
            KeyField::Country => row.country_id.clone(),
            KeyField::Prompt => row.prompt_id.to_string(),
            KeyField::Temperature => format!("{}", row.temperature),
            KeyField::Language => row.language.to_string(),
            KeyField::Metric => row.metric.to_string(),
        }
    }
}

impl FromStr for KeyField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "country" | "country_id" => Ok(KeyField::Country),
            "prompt" | "prompt_id" => Ok(KeyField::Prompt),
            "temperature" | "temp" => Ok(KeyField::Temperature),
            "language" | "lang" => Ok(KeyField::Language),
            "metric" => Ok(KeyField::Metric),
            _ => Err(format!("unknown key field `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Mean,
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: Vec<String>,
    /// Mean of the numeric values, or the non-missing count for [`Stat::Count`].
    pub value: Option<f64>,
    /// Non-missing rows in the group.
    pub n: usize,
    pub missing: usize,
}

type GroupKey = Vec<(Option<u64>, String)>;

/// Sort key that orders temperatures numerically rather than as text.
fn group_key(fields: &[KeyField], row: &ReportRow) -> GroupKey {
    fields
        .iter()
        .map(|f| match f {
            KeyField::Temperature => (Some(row.temperature.to_bits()), f.of(row)),
            _ => (None, f.of(row)),
        })
        .collect()
}

/// Groups rows by `group_by` (in group-key order) and computes `stat`.
/// Missing values are excluded from means and counted separately; labels
/// count towards `n` but not towards the mean.
pub fn aggregate(rows: &[ReportRow], group_by: &[KeyField], stat: Stat) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<GroupKey, (f64, usize, usize, usize)> = BTreeMap::new();
    for row in rows {
        let g = groups.entry(group_key(group_by, row)).or_default();
        match row.value {
            ReportValue::Number(x) => {
                g.0 += x;
                g.1 += 1;
                g.2 += 1;
            }
            ReportValue::Label(_) => g.2 += 1,
            ReportValue::Missing => g.3 += 1,
        }
    }
    groups
        .into_iter()
        .map(|(key, (sum, numeric, n, missing))| AggregateRow {
            key: key.into_iter().map(|(_, s)| s).collect(),
            value: match stat {
                Stat::Mean => (numeric > 0).then(|| sum / numeric as f64),
                Stat::Count => Some(n as f64),
            },
            n,
            missing,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegardRow {
    pub key: Vec<String>,
    pub proportions: RegardProportions,
    pub n: usize,
    pub missing: usize,
}

/// Regard-label proportions per group over the `RG` rows.
pub fn regard_table(rows: &[ReportRow], group_by: &[KeyField]) -> Vec<RegardRow> {
    let mut groups: BTreeMap<GroupKey, (Vec<RegardLabel>, usize)> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.metric == ReportMetric::RG) {
        let g = groups.entry(group_key(group_by, row)).or_default();
        match row.value {
            ReportValue::Label(l) => g.0.push(l),
            _ => g.1 += 1,
        }
    }
    groups
        .into_iter()
        .filter_map(|(key, (labels, missing))| {
            let proportions = regard_proportions(&labels).ok()?;
            Some(RegardRow {
                key: key.into_iter().map(|(_, s)| s).collect(),
                proportions,
                n: labels.len(),
                missing,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(country: &str, prompt: PromptId, temp: f64, metric: ReportMetric, value: ReportValue) -> ReportRow {
        ReportRow {
            country_id: country.into(),
            prompt_id: prompt,
            temperature: temp,
            language: Language::En,
            metric,
            value,
        }
    }

    fn num(x: f64) -> ReportValue {
        ReportValue::Number(x)
    }

    #[test]
    fn constant_column_mean() {
        let rows: Vec<_> = (0..5)
            .map(|i| row(&format!("c{i}"), PromptId::P1, 0.3, ReportMetric::SM, num(0.42)))
            .collect();
        let out = aggregate(&rows, &[KeyField::Metric], Stat::Mean);
        assert_eq!(out.len(), 1);
        assert!((out[0].value.unwrap() - 0.42).abs() < 1e-15);
    }

    #[test]
    fn six_row_fixture() {
        // chad: SM 0.2, 0.4, missing; mali: SM 0.9, HS 0.1, 0.3
        let rows = vec![
            row("chad", PromptId::P1, 0.0, ReportMetric::SM, num(0.2)),
            row("chad", PromptId::P2, 0.0, ReportMetric::SM, num(0.4)),
            row("chad", PromptId::P3, 0.0, ReportMetric::SM, ReportValue::Missing),
            row("mali", PromptId::P1, 0.0, ReportMetric::SM, num(0.9)),
            row("mali", PromptId::P1, 0.0, ReportMetric::HS, num(0.1)),
            row("mali", PromptId::P2, 0.0, ReportMetric::HS, num(0.3)),
        ];
        let out = aggregate(&rows, &[KeyField::Country, KeyField::Metric], Stat::Mean);
        let got: Vec<(Vec<String>, Option<f64>, usize, usize)> =
            out.into_iter().map(|r| (r.key, r.value, r.n, r.missing)).collect();
        let k = |a: &str, b: &str| vec![a.to_string(), b.to_string()];
        assert_eq!(got.len(), 3);
        assert_eq!((&got[0].0, got[0].2, got[0].3), (&k("chad", "SM"), 2, 1));
        assert!((got[0].1.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(got[1].0, k("mali", "HS"));
        assert!((got[1].1.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(got[2].0, k("mali", "SM"));
        assert_eq!(got[2].1, Some(0.9));

        let counts = aggregate(&rows, &[KeyField::Prompt], Stat::Count);
        let c: Vec<_> = counts.iter().map(|r| (r.key[0].as_str(), r.value.unwrap())).collect();
        assert_eq!(c, [("p1", 3.0), ("p2", 2.0), ("p3", 0.0)]);
    }

    #[test]
    fn temperatures_sort_numerically() {
        let rows: Vec<_> = [1.0, 0.3, 0.0, 0.7]
            .iter()
            .map(|&t| row("x", PromptId::P1, t, ReportMetric::SM, num(t)))
            .collect();
        let out = aggregate(&rows, &[KeyField::Temperature], Stat::Mean);
        let keys: Vec<_> = out.iter().map(|r| r.key[0].as_str()).collect();
        assert_eq!(keys, ["0", "0.3", "0.7", "1"]);
    }

    #[test]
    fn regard_grid_shape() {
        let mut rows = Vec::new();
        for p in PromptId::ALL {
            for t in [0.0, 0.3, 0.7, 1.0] {
                for (i, l) in RegardLabel::ALL.into_iter().enumerate() {
                    rows.push(row(&format!("c{i}"), p, t, ReportMetric::RG, ReportValue::Label(l)));
                }
                rows.push(row("z", p, t, ReportMetric::RG, ReportValue::Missing));
            }
        }
        let table = regard_table(&rows, &[KeyField::Prompt, KeyField::Temperature]);
        assert_eq!(table.len(), 12);
        let cells: usize = table.iter().map(|_| RegardLabel::ALL.len()).sum();
        assert_eq!(cells, 48);
        for r in &table {
            assert_eq!((r.n, r.missing), (4, 1));
            assert!((r.proportions.sum() - 1.0).abs() < 1e-12);
            assert_eq!(r.proportions.negative, 0.25);
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in ["RC", "SM", "HS", "OF", "RG", "bws-score", "direct-score"] {
            let parsed: ReportMetric = m.parse().unwrap();
            assert_eq!(parsed.as_str(), m);
            assert_eq!(serde_json::to_value(parsed).unwrap(), m);
        }
    }

    proptest! {
        #[test]
        fn counts_sum_to_present_rows(
            cases in prop::collection::vec((0usize..4, 0usize..3, prop::option::of(-5.0f64..5.0)), 0..60)
        ) {
            let rows: Vec<_> = cases
                .iter()
                .map(|&(c, p, v)| row(&format!("c{c}"), PromptId::ALL[p], 0.3, ReportMetric::SM, v.into()))
                .collect();
            let present = cases.iter().filter(|s| s.2.is_some()).count();
            for fields in [&[KeyField::Country][..], &[KeyField::Prompt], &[KeyField::Country, KeyField::Prompt], &[]] {
                let out = aggregate(&rows, fields, Stat::Count);
                let total: f64 = out.iter().map(|r| r.value.unwrap()).sum();
                prop_assert_eq!(total as usize, present);
                let missing: usize = out.iter().map(|r| r.missing).sum();
                prop_assert_eq!(missing, cases.len() - present);
            }
        }
    }
}
