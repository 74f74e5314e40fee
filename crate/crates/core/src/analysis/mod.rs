//! Joins scores and metrics with social indicators: correlation, group
//! comparison, grouped report tables and choropleth export.

mod indicators;
mod map;
mod report;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use indicators::{IndicatorTable, INDICATORS};
pub use map::{export_map, write_map_csv, MapRow, BUCKETS};
pub use report::{
    aggregate, regard_table, AggregateRow, KeyField, RegardRow, ReportMetric, ReportRow, ReportValue, Stat,
};
pub use stats::{
    average_ranks, mann_whitney, spearman, stars, MannWhitney, PermutationOptions, Spearman,
    DEFAULT_PERMUTATIONS, DEFAULT_PERMUTATION_SEED,
};

use crate::ranking::ScoreTable;
use crate::DiscourseKey;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("paired inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 complete pairs, got {0}")]
    TooFewPairs(usize),
    #[error("a variable is constant over the complete pairs")]
    ConstantInput,
    #[error("each sample needs at least 2 values, got {0}")]
    SampleTooSmall(usize),
    #[error("indicator table: {0}")]
    Indicators(String),
    #[error("unknown countries in indicator table: {0:?}")]
    UnknownCountries(Vec<String>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean log-score per country. Item ids that parse as discourse ids are
/// grouped by their country; other ids are taken to be country ids. With
/// `temperature` set, only discourses at that temperature contribute.
pub fn country_scores(table: &ScoreTable, temperature: Option<f64>) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (id, &log) in table.items.iter().zip(&table.log_scores) {
        let (country, temp) = match DiscourseKey::parse_id(id) {
            Ok(k) => (k.country_id, Some(k.temperature)),
            Err(_) => (id.clone(), None),
        };
        if let Some(t) = temperature {
            if temp.is_none_or(|x| (x - t).abs() > 1e-9) {
                continue;
            }
        }
        let e = acc.entry(country).or_insert((0.0, 0));
        e.0 += log;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(c, (sum, n))| (c, sum / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub indicator: String,
    /// `pooled` or a temperature such as `t0.3`.
    pub group: String,
    pub n: usize,
    /// Countries with a score but no indicator value (or vice versa).
    pub missing: usize,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: String,
    pub note: String,
}

/// Spearman correlation of per-country scores against every indicator.
pub fn correlate(
    scores: &BTreeMap<String, f64>,
    indicators: &IndicatorTable,
    group: &str,
    options: PermutationOptions,
) -> Vec<CorrelationRow> {
    let mut countries: Vec<&String> = scores.keys().collect();
    for c in indicators.countries() {
        if !scores.contains_key(c) {
            countries.push(c);
        }
    }
    countries.sort();
    countries.dedup();

    indicators
        .indicators()
        .into_iter()
        .map(|ind| {
            let x: Vec<Option<f64>> = countries.iter().map(|c| scores.get(*c).copied()).collect();
            let y: Vec<Option<f64>> = countries.iter().map(|c| indicators.value(c, &ind)).collect();
            let mut row = CorrelationRow {
                indicator: ind.clone(),
                group: group.to_string(),
                n: 0,
                missing: 0,
                rho: None,
                p_value: None,
                stars: String::new(),
                note: String::new(),
            };
            row.n = x.iter().zip(&y).filter(|(a, b)| a.is_some() && b.is_some()).count();
            row.missing = countries.len() - row.n;
            match spearman(&x, &y, options) {
                Ok(s) => {
                    row.rho = Some(s.rho);
                    row.p_value = Some(s.p_value);
                    row.stars = stars(s.p_value).to_string();
                }
                Err(e) => row.note = e.to_string(),
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_temperatures_per_country() {
        let table = ScoreTable::from_log_scores(
            vec![
                "zh-p1-t0-chad".into(),
                "zh-p1-t0.3-chad".into(),
                "zh-p1-t0-mali".into(),
                "niger".into(),
            ],
            vec![1.0, 3.0, -2.0, -2.0],
            1,
            true,
        );
        let pooled = country_scores(&table, None);
        assert_eq!(pooled["chad"], 2.0);
        assert_eq!(pooled["mali"], -2.0);
        assert_eq!(pooled["niger"], -2.0);
        let t0 = country_scores(&table, Some(0.0));
        assert_eq!(t0.len(), 2);
        assert_eq!(t0["chad"], 1.0);
    }

    #[test]
    fn correlation_reports_missingness() {
        let csv = "country_id,year,indicator,value\n\
                   a,2021,HDI,0.9\nb,2021,HDI,0.5\nc,2021,HDI,0.7\nd,2021,HDI,\n\
                   a,2021,WHR,7\nb,2021,WHR,5\n";
        let ind = IndicatorTable::from_reader(csv.as_bytes(), None).unwrap();
        let scores: BTreeMap<String, f64> =
            [("a", 3.0), ("b", 1.0), ("c", 2.0), ("d", 0.0)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let rows = correlate(&scores, &ind, "pooled", PermutationOptions { permutations: 100, ..Default::default() });
        let hdi = rows.iter().find(|r| r.indicator == "HDI").unwrap();
        assert_eq!((hdi.n, hdi.missing), (3, 1));
        assert_eq!(hdi.rho, Some(1.0));
        let whr = rows.iter().find(|r| r.indicator == "WHR").unwrap();
        assert_eq!(whr.n, 2);
        assert!(whr.rho.is_none());
        assert!(whr.note.contains("at least 3"));
    }
}
