//! Country registry loaded from the `id,language,kind,surface_form` CSV.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::CorpusError;
use crate::Language;

const BUNDLED: &str = include_str!("../../data/countries.csv");

/// Suffix appended to a Chinese country name to denote its people.
pub const ZH_PEOPLE_SUFFIX: &str = "人";

#[derive(Debug, Clone, PartialEq)]
pub struct Country {
    pub id: String,
    /// Official names, abbreviations and historical names, per language.
    pub names: BTreeMap<Language, Vec<String>>,
    /// Demonym surface forms, per language.
    pub nationality_aliases: BTreeMap<Language, Vec<String>>,
    /// Label separating countries that share a demonym, e.g. `Republic`
    /// for the Dominican Republic.
    pub disambiguation_suffix: Option<String>,
}

impl Country {
    pub fn names(&self, language: Language) -> &[String] {
        self.names.get(&language).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn demonyms(&self, language: Language) -> &[String] {
        self.nationality_aliases
            .get(&language)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Strings substituted for the prompt placeholder, in declaration order.
    ///
    /// English prompts take demonyms ("Afghan"); Chinese prompts take the
    /// country name followed by 人, for every listed name or abbreviation.
    pub fn prompt_fillers(&self, language: Language) -> Vec<String> {
        match language {
            Language::En => self.demonyms(language).to_vec(),
            Language::Zh => {
                let demonyms = self.demonyms(language);
                if !demonyms.is_empty() {
                    return demonyms.to_vec();
                }
                self.names(language)
                    .iter()
                    .map(|n| format!("{n}{ZH_PEOPLE_SUFFIX}"))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    language: String,
    kind: String,
    surface_form: String,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    countries: Vec<Country>,
    index: HashMap<String, usize>,
    languages: BTreeSet<Language>,
}

impl Registry {
    /// The 195-country registry shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED.as_bytes()).expect("bundled registry is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut registry = Registry::default();
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let language: Language = row.language.parse()?;
            let slot = match registry.index.get(&row.id) {
                Some(&i) => i,
                None => {
                    registry.index.insert(row.id.clone(), registry.countries.len());
                    registry.countries.push(Country {
                        id: row.id.clone(),
                        names: BTreeMap::new(),
                        nationality_aliases: BTreeMap::new(),
                        disambiguation_suffix: None,
                    });
                    registry.countries.len() - 1
                }
            };
            registry.languages.insert(language);
            let country = &mut registry.countries[slot];
            match row.kind.as_str() {
                "name" => country
                    .names
                    .entry(language)
                    .or_default()
                    .push(row.surface_form),
                "demonym" => {
                    let (surface, suffix) = split_disambiguation(&row.surface_form);
                    if let Some(suffix) = suffix {
                        country.disambiguation_suffix = Some(suffix);
                    }
                    let list = country.nationality_aliases.entry(language).or_default();
                    if !list.contains(&surface) {
                        list.push(surface);
                    }
                }
                other => {
                    return Err(CorpusError::Registry(format!(
                        "row {}: unknown kind `{other}`",
                        line + 2
                    )))
                }
            }
        }
        registry.validate()?;
        Ok(registry)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        for c in &self.countries {
            for &lang in &self.languages {
                if c.names(lang).is_empty() {
                    return Err(CorpusError::Registry(format!(
                        "country `{}` has no {lang} name",
                        c.id
                    )));
                }
            }
            if self.languages.contains(&Language::En) && c.demonyms(Language::En).is_empty() {
                return Err(CorpusError::Registry(format!(
                    "country `{}` has no English demonym",
                    c.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.countries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.countries.is_empty()
    }

    pub fn countries(&self) -> &[Country] {
        &self.countries
    }

    pub fn get(&self, id: &str) -> Option<&Country> {
        self.index.get(id).map(|&i| &self.countries[i])
    }

    pub fn languages(&self) -> impl Iterator<Item = Language> + '_ {
        self.languages.iter().copied()
    }

    /// Restricts the registry to the given ids, keeping registry order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self, CorpusError> {
        let wanted: BTreeSet<&str> = ids.iter().map(AsRef::as_ref).collect();
        for id in &wanted {
            if !self.index.contains_key(*id) {
                return Err(CorpusError::UnknownCountry(id.to_string()));
            }
        }
        let countries: Vec<Country> = self
            .countries
            .iter()
            .filter(|c| wanted.contains(c.id.as_str()))
            .cloned()
            .collect();
        let index = countries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), i))
            .collect();
        Ok(Self {
            countries,
            index,
            languages: self.languages.clone(),
        })
    }

    /// Every country name and demonym in `language`, deduplicated.
    ///
    /// Chinese demonyms are not listed separately: masking the country name
    /// leaves the trailing 人 in place (`[MASK]人`).
    pub fn anonymization_aliases(&self, language: Language) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.countries {
            let demonyms = match language {
                Language::En => c.demonyms(language),
                Language::Zh => &[],
            };
            for s in c.names(language).iter().chain(demonyms) {
                if seen.insert(s.clone()) {
                    out.push(s.clone());
                }
            }
        }
        out
    }
}

/// Splits `Dominican - Republic` into (`Dominican`, `Republic`). Hyphen,
/// en dash and em dash separators surrounded by spaces are accepted.
fn split_disambiguation(form: &str) -> (String, Option<String>) {
    for sep in [" - ", " – ", " — "] {
        if let Some((surface, suffix)) = form.split_once(sep) {
            return (surface.trim().to_string(), Some(suffix.trim().to_string()));
        }
    }
    (form.trim().to_string(), None)
}
