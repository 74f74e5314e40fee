use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::AnalysisError;
use crate::corpus::Registry;

/// Indicator names the bundled tooling expects. Any other name in the input
/// is accepted as well.
pub const INDICATORS: [&str; 7] = [
    "GDP",
    "PCGDP",
    "Incre_Rate_GDP",
    "Incre_Rate_PCGDP",
    "IU",
    "HDI",
    "WHR",
];

#[derive(Debug, Deserialize)]
struct Record {
    country_id: String,
    year: i32,
    indicator: String,
    value: Option<String>,
}

/// Per-country social indicators for a single year. A missing value is
/// `None`, never zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndicatorTable {
    pub year: i32,
    values: BTreeMap<String, BTreeMap<String, Option<f64>>>,
}

impl IndicatorTable {
    /// Reads the long format `country_id,year,indicator,value`. Empty cells
    /// and `NA`/`NaN` are missing. With `year = None` the most recent year
    /// in the file is used; rows for other years are ignored.
    pub fn from_reader<R: Read>(reader: R, year: Option<i32>) -> Result<Self, AnalysisError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let records: Vec<Record> = rdr.deserialize().collect::<Result<_, _>>()?;
        let year = match year.or_else(|| records.iter().map(|r| r.year).max()) {
            Some(y) => y,
            None => return Ok(Self::default()),
        };
        let mut values: BTreeMap<String, BTreeMap<String, Option<f64>>> = BTreeMap::new();
        for r in records.into_iter().filter(|r| r.year == year) {
            let value = match r.value.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(s) if s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") => None,
                Some(s) => Some(s.parse::<f64>().map_err(|_| {
                    AnalysisError::Indicators(format!(
                        "{} {} {}: bad value `{s}`",
                        r.country_id, year, r.indicator
                    ))
                })?),
            };
            let slot = values.entry(r.country_id.clone()).or_default();
            if slot.insert(r.indicator.clone(), value).is_some() {
                return Err(AnalysisError::Indicators(format!(
                    "duplicate row for {} {} {}",
                    r.country_id, year, r.indicator
                )));
            }
        }
        Ok(Self { year, values })
    }

    pub fn from_path(path: impl AsRef<Path>, year: Option<i32>) -> Result<Self, AnalysisError> {
        Self::from_reader(std::fs::File::open(path)?, year)
    }

    pub fn countries(&self) -> impl Iterator<Item = &String> {
        self.values.keys()
    }

    /// All indicator names present, sorted.
    pub fn indicators(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.values.values().flat_map(|m| m.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn value(&self, country: &str, indicator: &str) -> Option<f64> {
        self.values.get(country)?.get(indicator).copied().flatten()
    }

    /// Rejects country ids that the registry does not know.
    pub fn validate(&self, registry: &Registry) -> Result<(), AnalysisError> {
        let unknown: Vec<String> = self
            .values
            .keys()
            .filter(|c| registry.get(c).is_none())
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(AnalysisError::UnknownCountries(unknown))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "country_id,year,indicator,value\n\
        japan,2021,HDI,0.925\n\
        japan,2020,HDI,0.919\n\
        chad,2021,HDI,\n\
        chad,2021,WHR,NA\n\
        japan,2021,WHR,6.0\n";

    #[test]
    fn latest_year_and_explicit_missing() {
        let t = IndicatorTable::from_reader(CSV.as_bytes(), None).unwrap();
        assert_eq!(t.year, 2021);
        assert_eq!(t.value("japan", "HDI"), Some(0.925));
        assert_eq!(t.value("chad", "HDI"), None);
        assert_eq!(t.value("chad", "WHR"), None);
        assert_eq!(t.indicators(), ["HDI", "WHR"]);
        let old = IndicatorTable::from_reader(CSV.as_bytes(), Some(2020)).unwrap();
        assert_eq!(old.value("japan", "HDI"), Some(0.919));
        assert_eq!(old.value("japan", "WHR"), None);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        let dup = "country_id,year,indicator,value\na,2021,HDI,1\na,2021,HDI,2\n";
        assert!(IndicatorTable::from_reader(dup.as_bytes(), None).is_err());
        let bad = "country_id,year,indicator,value\na,2021,HDI,high\n";
        assert!(IndicatorTable::from_reader(bad.as_bytes(), None).is_err());
    }

    #[test]
    fn validates_against_registry() {
        let reg = Registry::bundled();
        let t = IndicatorTable::from_reader(CSV.as_bytes(), None).unwrap();
        t.validate(&reg).unwrap();
        let odd = "country_id,year,indicator,value\natlantis,2021,HDI,1\n";
        let t = IndicatorTable::from_reader(odd.as_bytes(), None).unwrap();
        assert!(matches!(t.validate(&reg), Err(AnalysisError::UnknownCountries(c)) if c == ["atlantis"]));
    }
}
