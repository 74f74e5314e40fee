//! One function per pipeline step, shared by the subcommands and `run`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use biaseval_core::analysis::{
    self, country_scores, export_map, mann_whitney, CorrelationRow, IndicatorTable, KeyField, MannWhitney,
    PermutationOptions, ReportMetric, ReportRow, ReportValue, Stat,
};
use biaseval_core::bws::{self, ComparisonPair, Judgment, OrderTag, Source, Tuple};
use biaseval_core::corpus::{merge_aliases, Anonymizer, Discourse, MergeThreshold, Registry};
use biaseval_core::lexmetrics::{mattr_batch, tokenize, MattrConfig};
use biaseval_core::ranking::{rank_with_smoothing, IlsrOptions, RankingError, ScoreTable};
use biaseval_core::scoring::{Metric, RegardLabel, ScoreValue};
use biaseval_core::{DiscourseKey, Execution, Language, PromptId};
use biaseval_remote::ScorerClient;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::CliError;

/// One generation round for one alias, before merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    #[serde(flatten)]
    pub key: DiscourseKey,
    pub body: String,
    /// Surface form the prompt was filled with; records without one are
    /// treated as a single alias.
    #[serde(default)]
    pub alias: String,
    #[serde(default = "first_round")]
    pub round: u32,
    #[serde(default)]
    pub refused: bool,
}

fn first_round() -> u32 {
    1
}

/// Merges rounds per alias, then aliases per slot. Output follows the
/// first appearance of each slot in the input.
pub fn merge_records(
    records: Vec<RoundRecord>,
    threshold: impl Fn(Language) -> MergeThreshold,
) -> Result<Vec<Discourse>, CliError> {
    type AliasRounds = (String, Vec<RoundRecord>);
    let mut slots: Vec<(DiscourseKey, Vec<AliasRounds>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for r in records {
        let i = *index.entry(r.key.id()).or_insert_with(|| {
            slots.push((r.key.clone(), Vec::new()));
            slots.len() - 1
        });
        let aliases = &mut slots[i].1;
        match aliases.iter_mut().find(|(a, _)| *a == r.alias) {
            Some((_, rounds)) => rounds.push(r),
            None => aliases.push((r.alias.clone(), vec![r])),
        }
    }
    slots
        .into_iter()
        .map(|(key, aliases)| {
            let th = threshold(key.language);
            let per_alias = aliases
                .into_iter()
                .map(|(_, mut rounds)| {
                    rounds.sort_by_key(|r| r.round);
                    let mut it = rounds.into_iter();
                    let first = it.next().expect("alias groups are non-empty");
                    let mut d = Discourse::new(key.clone(), first.body);
                    d.refused = first.refused;
                    for r in it {
                        d.absorb_round(&r.body, th);
                        d.refused |= r.refused;
                    }
                    d
                })
                .collect();
            merge_aliases(per_alias, th).map_err(|e| CliError::Data(e.to_string()))
        })
        .collect()
}

/// Masks every country name and demonym of `registry` in every body.
pub fn anonymize(discourses: &mut [Discourse], registry: &Registry) -> Result<(), CliError> {
    let mut by_lang: HashMap<Language, Anonymizer> = HashMap::new();
    for d in discourses.iter_mut() {
        let lang = d.key.language;
        let a = match by_lang.entry(lang) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(
                Anonymizer::new(lang, &registry.anonymization_aliases(lang))
                    .map_err(|e| CliError::Data(e.to_string()))?,
            ),
        };
        d.anonymize_with(a);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MattrRow {
    pub country_id: String,
    pub prompt_id: PromptId,
    pub temperature: f64,
    pub language: Language,
    pub value: f64,
    pub n_tokens: usize,
    pub fallback_used: bool,
}

pub const MATTR_HEADER: [&str; 7] = [
    "country_id",
    "prompt_id",
    "temperature",
    "language",
    "value",
    "n_tokens",
    "fallback_used",
];

/// MATTR for every non-refused discourse; the ids of texts without tokens
/// are returned separately.
pub fn mattr_rows(discourses: &[Discourse], config: MattrConfig, exec: Execution) -> (Vec<MattrRow>, Vec<String>) {
    let kept: Vec<&Discourse> = discourses.iter().filter(|d| !d.refused).collect();
    let seqs: Vec<_> = kept.iter().map(|d| tokenize(&d.body, d.key.language)).collect();
    let mut rows = Vec::with_capacity(kept.len());
    let mut empty = Vec::new();
    for (d, r) in kept.iter().zip(mattr_batch(&seqs, config, exec)) {
        match r {
            Ok(m) => rows.push(MattrRow {
                country_id: d.key.country_id.clone(),
                prompt_id: d.key.prompt_id,
                temperature: d.key.temperature,
                language: d.key.language,
                value: m.value,
                n_tokens: m.n_tokens,
                fallback_used: m.fallback_used,
            }),
            Err(_) => empty.push(d.id()),
        }
    }
    (rows, empty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub country_id: String,
    pub prompt_id: PromptId,
    pub temperature: f64,
    pub language: Language,
    pub metric: Metric,
    /// Scalar, regard label, or empty when the scorer failed on the text.
    pub value: String,
}

pub const METRIC_HEADER: [&str; 6] = ["country_id", "prompt_id", "temperature", "language", "metric", "value"];

/// Scores every non-refused discourse whose language supports `metric`.
pub async fn score_metric(
    client: &ScorerClient,
    metric: Metric,
    discourses: &[Discourse],
) -> Result<Vec<MetricRow>, CliError> {
    let mut rows = Vec::new();
    for lang in Language::ALL {
        let batch: Vec<&Discourse> = discourses.iter().filter(|d| !d.refused && d.key.language == lang).collect();
        if batch.is_empty() || client.compatibility().check(metric, lang).is_err() {
            continue;
        }
        let texts: Vec<String> = batch.iter().map(|d| d.body.clone()).collect();
        let scores = client
            .score_texts(metric, lang, &texts)
            .await
            .map_err(|e| CliError::Data(format!("{metric}/{lang}: {e}")))?;
        for (d, s) in batch.iter().zip(scores) {
            rows.push(MetricRow {
                country_id: d.key.country_id.clone(),
                prompt_id: d.key.prompt_id,
                temperature: d.key.temperature,
                language: lang,
                metric,
                value: match s {
                    ScoreValue::Scalar(v) => v.to_string(),
                    ScoreValue::Label(l) => l.as_str().to_string(),
                    ScoreValue::Missing => String::new(),
                },
            });
        }
    }
    Ok(rows)
}

/// Long-format report rows for grouped statistics.
pub fn report_rows(mattr: &[MattrRow], metrics: &[MetricRow]) -> Vec<ReportRow> {
    let mut out: Vec<ReportRow> = mattr
        .iter()
        .map(|m| ReportRow {
            country_id: m.country_id.clone(),
            prompt_id: m.prompt_id,
            temperature: m.temperature,
            language: m.language,
            metric: ReportMetric::RC,
            value: ReportValue::Number(m.value),
        })
        .collect();
    out.extend(metrics.iter().map(|m| ReportRow {
        country_id: m.country_id.clone(),
        prompt_id: m.prompt_id,
        temperature: m.temperature,
        language: m.language,
        metric: match m.metric {
            Metric::SM => ReportMetric::SM,
            Metric::HS => ReportMetric::HS,
            Metric::OF => ReportMetric::OF,
            Metric::RG => ReportMetric::RG,
        },
        value: if m.value.is_empty() {
            ReportValue::Missing
        } else if let Ok(v) = m.value.parse::<f64>() {
            ReportValue::Number(v)
        } else if let Ok(l) = m.value.parse::<RegardLabel>() {
            ReportValue::Label(l)
        } else {
            ReportValue::Missing
        },
    }));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub language: String,
    pub metric: String,
    pub prompt_id: String,
    pub temperature: String,
    /// Empty when the group has no numeric value.
    pub mean: Option<f64>,
    pub n: usize,
    pub missing: usize,
}

pub const SUMMARY_HEADER: [&str; 7] = ["language", "metric", "prompt_id", "temperature", "mean", "n", "missing"];

const SUMMARY_KEY: [KeyField; 4] = [KeyField::Language, KeyField::Metric, KeyField::Prompt, KeyField::Temperature];

/// Mean of every numeric metric per language, prompt and temperature.
pub fn summary_rows(rows: &[ReportRow]) -> Vec<SummaryRow> {
    let numeric: Vec<ReportRow> = rows.iter().filter(|r| r.metric != ReportMetric::RG).cloned().collect();
    analysis::aggregate(&numeric, &SUMMARY_KEY, Stat::Mean)
        .into_iter()
        .map(|a| {
            let [language, metric, prompt_id, temperature]: [String; 4] =
                a.key.try_into().expect("four key fields");
            SummaryRow {
                language,
                metric,
                prompt_id,
                temperature,
                mean: a.value,
                n: a.n,
                missing: a.missing,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegardSummaryRow {
    pub language: String,
    pub prompt_id: String,
    pub temperature: String,
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
    pub other: f64,
    pub n: usize,
    pub missing: usize,
}

pub const REGARD_HEADER: [&str; 9] = [
    "language",
    "prompt_id",
    "temperature",
    "negative",
    "neutral",
    "positive",
    "other",
    "n",
    "missing",
];

pub fn regard_rows(rows: &[ReportRow]) -> Vec<RegardSummaryRow> {
    analysis::regard_table(rows, &[KeyField::Language, KeyField::Prompt, KeyField::Temperature])
        .into_iter()
        .map(|r| {
            let [language, prompt_id, temperature]: [String; 3] = r.key.try_into().expect("three key fields");
            RegardSummaryRow {
                language,
                prompt_id,
                temperature,
                negative: r.proportions.negative,
                neutral: r.proportions.neutral,
                positive: r.proportions.positive,
                other: r.proportions.other,
                n: r.n,
                missing: r.missing,
            }
        })
        .collect()
}

/// Ids of the texts that enter best-worst scaling, in corpus order.
pub fn bws_selection(discourses: &[Discourse], language: Language, prompts: &[PromptId]) -> Vec<String> {
    discourses
        .iter()
        .filter(|d| !d.refused && d.key.language == language && prompts.contains(&d.key.prompt_id))
        .map(Discourse::id)
        .collect()
}

/// Expands every judgment against its tuple.
pub fn expand_judgments(tuples: &[Tuple], judgments: &[Judgment]) -> Result<Vec<ComparisonPair>, CliError> {
    let by_id: HashMap<u32, &Tuple> = tuples.iter().map(|t| (t.tuple_id, t)).collect();
    let mut out = Vec::with_capacity(judgments.len() * 5);
    for j in judgments {
        let t = by_id
            .get(&j.tuple_id)
            .ok_or_else(|| CliError::Data(format!("judgment for unknown tuple {}", j.tuple_id)))?;
        out.extend(bws::expand(j, t).map_err(|e| CliError::Data(format!("tuple {}: {e}", j.tuple_id)))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub item_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaReport {
    pub kappa: f64,
    /// Items labelled by both raters.
    pub n: usize,
    pub only_a: usize,
    pub only_b: usize,
}

/// Cohen's kappa over the items both raters labelled.
pub fn kappa_report(a: &[LabelRow], b: &[LabelRow]) -> Result<KappaReport, CliError> {
    let index = |rows: &[LabelRow]| -> Result<BTreeMap<String, String>, CliError> {
        let mut m = BTreeMap::new();
        for r in rows {
            if m.insert(r.item_id.clone(), r.label.clone()).is_some() {
                return Err(CliError::Data(format!("item `{}` labelled twice by one rater", r.item_id)));
            }
        }
        Ok(m)
    };
    let (ma, mb) = (index(a)?, index(b)?);
    let shared: Vec<&String> = ma.keys().filter(|k| mb.contains_key(*k)).collect();
    let la: Vec<&str> = shared.iter().map(|k| ma[*k].as_str()).collect();
    let lb: Vec<&str> = shared.iter().map(|k| mb[*k].as_str()).collect();
    let kappa = bws::kappa(&la, &lb).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(KappaReport {
        kappa,
        n: shared.len(),
        only_a: ma.len() - shared.len(),
        only_b: mb.len() - shared.len(),
    })
}

/// Which comparison pairs enter ranking.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairFilter {
    pub source: Option<Source>,
    pub order_tag: Option<OrderTag>,
}

impl PairFilter {
    pub fn keep(&self, p: &ComparisonPair) -> bool {
        self.source.is_none_or(|s| s == p.source) && self.order_tag.is_none_or(|o| o == p.order_tag)
    }
}

pub fn read_pairs(path: &Path) -> Result<Vec<ComparisonPair>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    bws::read_pairs_csv(f).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_pairs(path: &Path, pairs: &[ComparisonPair]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    bws::write_pairs_csv(pairs, &mut buf).map_err(|e| CliError::Data(e.to_string()))?;
    io::write_atomic(path, &buf)
}

/// Ranks; a disconnected graph is reported with the items of every
/// component so the offending keys are visible.
pub fn rank(pairs: &[ComparisonPair], epsilon: f64, options: IlsrOptions) -> Result<ScoreTable, CliError> {
    rank_with_smoothing(pairs, epsilon, options).map_err(|e| match e {
        RankingError::Disconnected { components } => CliError::Stage {
            stage: "rank".into(),
            message: format!("comparison graph has {} components; raise epsilon", components.len()),
            keys: components.iter().map(|c| c.join("+")).collect(),
        },
        other => CliError::Data(other.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub item_id: String,
    pub score: f64,
    pub log_score: f64,
}

pub const SCORE_HEADER: [&str; 3] = ["item_id", "score", "log_score"];

pub fn score_rows(table: &ScoreTable) -> Vec<ScoreRow> {
    (0..table.len())
        .map(|i| ScoreRow {
            item_id: table.items[i].clone(),
            score: table.scores[i],
            log_score: table.log_scores[i],
        })
        .collect()
}

pub fn read_scores(path: &Path) -> Result<ScoreTable, CliError> {
    let rows: Vec<ScoreRow> = io::read_csv(path)?;
    Ok(ScoreTable {
        items: rows.iter().map(|r| r.item_id.clone()).collect(),
        scores: rows.iter().map(|r| r.score).collect(),
        log_scores: rows.iter().map(|r| r.log_score).collect(),
        iterations: 0,
        converged: true,
    })
}

/// Temperatures present among discourse-id items, ascending.
pub fn temperatures(table: &ScoreTable) -> Vec<f64> {
    let mut ts: Vec<f64> = table
        .items
        .iter()
        .filter_map(|id| DiscourseKey::parse_id(id).ok())
        .map(|k| k.temperature)
        .collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

pub fn group_name(temperature: Option<f64>) -> String {
    match temperature {
        None => "pooled".into(),
        Some(t) => format!("t{t}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryScoreRow {
    pub country_id: String,
    pub group: String,
    pub log_score: f64,
}

/// Per-country mean log-score, pooled over temperatures and per
/// temperature.
pub fn country_score_rows(table: &ScoreTable) -> Vec<CountryScoreRow> {
    std::iter::once(None)
        .chain(temperatures(table).into_iter().map(Some))
        .flat_map(|t| {
            country_scores(table, t).into_iter().map(move |(country_id, log_score)| CountryScoreRow {
                country_id,
                group: group_name(t),
                log_score,
            })
        })
        .collect()
}

/// Correlations against every indicator, pooled and per temperature.
pub fn correlate_all(table: &ScoreTable, indicators: &IndicatorTable, options: PermutationOptions) -> Vec<CorrelationRow> {
    std::iter::once(None)
        .chain(temperatures(table).into_iter().map(Some))
        .flat_map(|t| analysis::correlate(&country_scores(table, t), indicators, &group_name(t), options))
        .collect()
}

pub const CORRELATION_HEADER: [&str; 8] = ["indicator", "group", "n", "missing", "rho", "p_value", "stars", "note"];

/// Choropleth rows from pooled per-country scores.
pub fn map_rows(table: &ScoreTable, temperature: Option<f64>) -> Vec<analysis::MapRow> {
    let scores: Vec<(String, f64)> = country_scores(table, temperature).into_iter().collect();
    export_map(&scores)
}

/// Numeric values of one column; empty and non-numeric cells are skipped
/// and counted. Without `column`, `log_score` is used when present, else
/// `value`.
pub fn read_column(path: &Path, column: Option<&str>) -> Result<(Vec<f64>, usize), CliError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    let name = match column {
        Some(c) => c,
        None if headers.iter().any(|h| h == "log_score") => "log_score",
        None => "value",
    };
    let idx = headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Data(format!("{}: no column `{name}`", path.display())))?;
    let mut values = Vec::new();
    let mut skipped = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        match rec.get(idx).and_then(|v| v.parse::<f64>().ok()).filter(|v| v.is_finite()) {
            Some(v) => values.push(v),
            None => skipped += 1,
        }
    }
    Ok((values, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: String,
}

pub fn compare(a: &[f64], b: &[f64]) -> Result<Comparison, CliError> {
    let MannWhitney { u, z, p_value } = mann_whitney(a, b).map_err(|e| CliError::Data(e.to_string()))?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Comparison {
        n_a: a.len(),
        n_b: b.len(),
        mean_a: mean(a),
        mean_b: mean(b),
        u,
        z,
        p_value,
        stars: analysis::stars(p_value).to_string(),
    })
}

/// Distinct country ids among discourse-id items.
pub fn countries_in(table: &ScoreTable) -> BTreeSet<String> {
    country_scores(table, None).into_keys().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(country: &str, alias: &str, round: u32, body: &str) -> RoundRecord {
        RoundRecord {
            key: DiscourseKey::new(country, PromptId::P1, 0.0, Language::En),
            body: body.into(),
            alias: alias.into(),
            round,
            refused: false,
        }
    }

    #[test]
    fn merge_folds_rounds_then_aliases() {
        let th = |_| MergeThreshold::new(0.8).unwrap();
        let out = merge_records(
            vec![
                rec("chad", "Chadian", 2, "they are kind and generous people"),
                rec("mali", "Malian", 1, "x"),
                rec("chad", "Chadian", 1, "they are kind and generous people"),
                rec("chad", "Chad", 1, "a completely different story about a nation"),
            ],
            th,
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].key.country_id, "chad");
        assert_eq!(out[0].rounds_merged, 3);
        assert_eq!(
            out[0].body,
            "they are kind and generous people\na completely different story about a nation"
        );
        assert_eq!(out[1].rounds_merged, 1);
    }

    #[test]
    fn round_records_accept_bare_discourse_lines() {
        let r: RoundRecord = serde_json::from_str(
            r#"{"country_id":"chad","prompt_id":"p2","temperature":0.3,"language":"zh","body":"x"}"#,
        )
        .unwrap();
        assert_eq!((r.round, r.alias.as_str(), r.key.id().as_str()), (1, "", "zh-p2-t0.3-chad"));
    }

    #[test]
    fn kappa_joins_on_item_id() {
        let rows = |v: &[(&str, &str)]| {
            v.iter()
                .map(|(i, l)| LabelRow {
                    item_id: i.to_string(),
                    label: l.to_string(),
                })
                .collect::<Vec<_>>()
        };
        let a = rows(&[("1", "x"), ("2", "y"), ("3", "x"), ("9", "x")]);
        let b = rows(&[("3", "x"), ("2", "y"), ("1", "x")]);
        let r = kappa_report(&a, &b).unwrap();
        assert_eq!((r.kappa, r.n, r.only_a, r.only_b), (1.0, 3, 1, 0));
        assert!(kappa_report(&rows(&[("1", "x"), ("1", "y")]), &b).is_err());
    }

    #[test]
    fn disconnected_ranking_names_components() {
        let p = |w: &str, l: &str| ComparisonPair {
            winner_id: w.into(),
            loser_id: l.into(),
            source: Source::Human,
            order_tag: OrderTag::Same,
            round: 1,
        };
        let err = rank(&[p("a", "b"), p("c", "d")], 0.0, IlsrOptions::default()).unwrap_err();
        match err {
            CliError::Stage { keys, .. } => assert_eq!(keys.len(), 4),
            other => panic!("{other}"),
        }
        assert!(rank(&[p("a", "b"), p("c", "d")], 0.01, IlsrOptions::default()).is_ok());
    }

    #[test]
    fn country_rows_pool_and_split_by_temperature() {
        let table = ScoreTable {
            items: vec!["zh-p1-t0-chad".into(), "zh-p1-t0.3-chad".into(), "zh-p1-t0-mali".into()],
            scores: vec![1.0; 3],
            log_scores: vec![1.0, -1.0, 0.0],
            iterations: 0,
            converged: true,
        };
        let rows = country_score_rows(&table);
        let get = |c: &str, g: &str| rows.iter().find(|r| r.country_id == c && r.group == g).map(|r| r.log_score);
        assert_eq!(get("chad", "pooled"), Some(0.0));
        assert_eq!(get("chad", "t0"), Some(1.0));
        assert_eq!(get("chad", "t0.3"), Some(-1.0));
        assert_eq!(get("mali", "t0.3"), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn records() -> impl Strategy<Value = Vec<RoundRecord>> {
            prop::collection::vec((0usize..3, 0usize..3, 1u32..3, "[ab ]{0,12}"), 1..24).prop_map(|v| {
                v.into_iter()
                    .map(|(c, a, round, body)| rec(["chad", "mali", "peru"][c], ["x", "y", "z"][a], round, &body))
                    .collect()
            })
        }

        proptest! {
            /// One discourse per slot, in first-appearance order, counting
            /// every input round.
            #[test]
            fn merge_keeps_every_slot_and_round(rs in records()) {
                let mut order: Vec<String> = Vec::new();
                for r in &rs {
                    if !order.contains(&r.key.country_id) {
                        order.push(r.key.country_id.clone());
                    }
                }
                let out = merge_records(rs.clone(), |_| MergeThreshold::new(0.8).unwrap()).unwrap();
                let got: Vec<String> = out.iter().map(|d| d.key.country_id.clone()).collect();
                prop_assert_eq!(got, order);
                for d in &out {
                    let n = rs.iter().filter(|r| r.key == d.key).count() as u32;
                    prop_assert_eq!(d.rounds_merged, n);
                }
            }

            #[test]
            fn kappa_is_symmetric(labels in prop::collection::vec((0u8..3, 0u8..3), 2..40)) {
                let a: Vec<LabelRow> = labels.iter().enumerate()
                    .map(|(i, (x, _))| LabelRow { item_id: i.to_string(), label: x.to_string() }).collect();
                let b: Vec<LabelRow> = labels.iter().enumerate()
                    .map(|(i, (_, y))| LabelRow { item_id: i.to_string(), label: y.to_string() }).collect();
                match (kappa_report(&a, &b), kappa_report(&b, &a)) {
                    (Ok(x), Ok(y)) => prop_assert!((x.kappa - y.kappa).abs() < 1e-12 || (x.kappa.is_nan() && y.kappa.is_nan())),
                    (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
                }
            }
        }
    }
}
