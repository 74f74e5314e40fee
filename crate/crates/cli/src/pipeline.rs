//! Resumable end-to-end run. Each stage writes its artifacts atomically into
//! the output directory and is skipped when they already exist, unless an
//! upstream stage re-ran or `force` is set.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use biaseval_core::analysis::IndicatorTable;
use biaseval_core::bws::{self, Tuple};
use biaseval_core::corpus::{self, Discourse};
use biaseval_remote::generate::{generate_corpus, MissingSlot, Refusal};
use biaseval_remote::mock::{self, MockServer, StubMode};
use biaseval_remote::pairwise::{pairs_from_tuples, pairwise_annotate};
use biaseval_remote::{ChatClient, ScorerClient};
use biaseval_core::scoring::Compatibility;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::{Annotator, RunConfig};
use crate::{io, stages, CliError};

pub const CORPUS: &str = "corpus.jsonl";
pub const GENERATION_REPORT: &str = "generation_report.json";
pub const ANON_CORPUS: &str = "corpus.anon.jsonl";
pub const MATTR: &str = "mattr.csv";
pub const METRICS: &str = "metrics.csv";
pub const SUMMARY: &str = "summary.csv";
pub const REGARD: &str = "regard.csv";
pub const TUPLES: &str = "tuples.json";
pub const PAIRS: &str = "pairs.csv";
pub const ANSWERS: &str = "pairwise_answers.jsonl";
pub const ANNOTATION_REPORT: &str = "annotation_report.json";
pub const SCORES: &str = "scores.csv";
pub const RANKING_REPORT: &str = "ranking_report.json";
pub const COUNTRY_SCORES: &str = "country_scores.csv";
pub const MAP: &str = "map.csv";
pub const CORRELATIONS: &str = "correlations.csv";
pub const RESOLVED_CONFIG: &str = "run_config.toml";

pub const STAGES: [&str; 7] = ["generate", "anonymize", "metrics", "schedule", "annotate", "rank", "analyze"];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Re-run every stage even when its outputs exist.
    pub force: bool,
    /// Serve the chat and scorer endpoints from in-process stubs.
    pub mock: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub stage: &'static str,
    pub ran: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub stages: Vec<StageRecord>,
}

impl RunSummary {
    pub fn ran(&self, stage: &str) -> bool {
        self.stages.iter().any(|s| s.stage == stage && s.ran)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub requests: usize,
    pub generated: usize,
    pub refusals: Vec<Refusal>,
    pub missing: Vec<MissingSlot>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub tuples: usize,
    pub pairs: usize,
    pub comparisons: usize,
    pub unresolved: Vec<String>,
    pub kappa_same: Option<f64>,
    pub kappa_reverse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub items: usize,
    pub pairs: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Runner<'a> {
    out: &'a Path,
    force: bool,
    /// An upstream stage re-ran, so every later output is stale.
    dirty: bool,
    summary: RunSummary,
}

impl Runner<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn fresh(&self, outputs: &[&str]) -> bool {
        !self.force && !self.dirty && outputs.iter().all(|o| self.path(o).exists())
    }

    fn record(&mut self, stage: &'static str, ran: bool) {
        if ran {
            self.dirty = true;
            info!(stage, "done");
        } else {
            info!(stage, "up to date, skipped");
        }
        self.summary.stages.push(StageRecord { stage, ran });
    }
}

/// Live endpoints for the run; stub servers stop when this drops.
struct Endpoints {
    config: RunConfig,
    api_key: Option<String>,
    _servers: Vec<MockServer>,
}

impl Endpoints {
    async fn new(config: &RunConfig, mock_mode: bool) -> Result<Self, CliError> {
        let mut config = config.clone();
        if !mock_mode {
            return Ok(Self {
                config,
                api_key: None,
                _servers: Vec::new(),
            });
        }
        let chat = mock::spawn_chat(mock::scripted_responder(config.prompt_set()?))
            .await
            .map_err(|e| CliError::Data(format!("mock chat: {e}")))?;
        let scorer = mock::spawn_scorer(StubMode::Hash, 0)
            .await
            .map_err(|e| CliError::Data(format!("mock scorer: {e}")))?;
        config.chat.base_url = chat.url("");
        config.chat.requests_per_minute = 0;
        config.chat.max_in_flight = config.chat.max_in_flight.max(32);
        config.chat.initial_backoff_ms = 1;
        config.scorer.endpoint = scorer.url("/score");
        config.scorer.initial_backoff_ms = 1;
        Ok(Self {
            config,
            api_key: Some("mock".into()),
            _servers: vec![chat, scorer],
        })
    }

    fn chat(&self) -> Result<ChatClient, CliError> {
        let c = match &self.api_key {
            Some(k) => ChatClient::new(self.config.chat.clone(), Some(k.clone())),
            None => ChatClient::from_env(self.config.chat.clone()),
        };
        c.map_err(|e| CliError::Config(format!("chat client: {e}")))
    }

    fn scorer(&self) -> Result<ScorerClient, CliError> {
        ScorerClient::new(self.config.scorer.clone(), Compatibility::bundled())
            .map_err(|e| CliError::Config(format!("scorer client: {e}")))
    }
}

/// Runs every stage in order; see the module docs for skipping rules.
pub async fn run(config: &RunConfig, options: &RunOptions) -> Result<RunSummary, CliError> {
    config.validate()?;
    std::fs::create_dir_all(&options.out).map_err(|e| CliError::io(&options.out, e))?;
    let ep = Endpoints::new(config, options.mock).await?;
    let mut r = Runner {
        out: &options.out,
        force: options.force,
        dirty: false,
        summary: RunSummary::default(),
    };

    let ran = generate(&mut r, config, &ep).await.map_err(|e| e.in_stage("generate"))?;
    r.record("generate", ran);

    let ran = !r.fresh(&[ANON_CORPUS]);
    if ran {
        anonymize(&r, config).map_err(|e| e.in_stage("anonymize"))?;
    }
    r.record("anonymize", ran);

    let ran = !r.fresh(&[MATTR, METRICS, SUMMARY, REGARD]);
    if ran {
        metrics(&r, config, &ep).await.map_err(|e| e.in_stage("metrics"))?;
    }
    r.record("metrics", ran);

    let ran = !r.fresh(&[TUPLES]);
    if ran {
        schedule(&r, config).map_err(|e| e.in_stage("schedule"))?;
    }
    r.record("schedule", ran);

    let ran = match config.bws.annotator {
        Annotator::Human => {
            if !r.path(PAIRS).exists() {
                return Err(CliError::Stage {
                    stage: "annotate".into(),
                    message: format!(
                        "human annotation selected but {} is missing; export it from the annotation service",
                        r.path(PAIRS).display()
                    ),
                    keys: Vec::new(),
                });
            }
            false
        }
        Annotator::Llm => {
            let ran = !r.fresh(&[PAIRS, ANSWERS, ANNOTATION_REPORT]);
            if ran {
                annotate(&r, config, &ep).await.map_err(|e| e.in_stage("annotate"))?;
            }
            ran
        }
    };
    r.record("annotate", ran);

    let ran = !r.fresh(&[SCORES, RANKING_REPORT]);
    if ran {
        rank(&r, config).map_err(|e| e.in_stage("rank"))?;
    }
    r.record("rank", ran);

    let mut outputs = vec![COUNTRY_SCORES, MAP];
    if config.analysis.indicators.is_some() {
        outputs.push(CORRELATIONS);
    }
    let ran = !r.fresh(&outputs);
    if ran {
        analyze(&r, config).map_err(|e| e.in_stage("analyze"))?;
    }
    r.record("analyze", ran);

    if r.dirty || !r.path(RESOLVED_CONFIG).exists() {
        io::write_atomic(&r.path(RESOLVED_CONFIG), config.to_toml().as_bytes())?;
    }
    Ok(r.summary)
}

/// Generates only the slots not already in the corpus file, so a run that
/// lost slots to transient failures resumes where it stopped.
async fn generate(r: &mut Runner<'_>, config: &RunConfig, ep: &Endpoints) -> Result<bool, CliError> {
    let corpus_path = r.path(CORPUS);
    let report_path = r.path(GENERATION_REPORT);
    let previous: Option<GenerationSummary> = if r.force || !report_path.exists() {
        None
    } else {
        Some(io::read_json(&report_path)?)
    };
    if corpus_path.exists() && previous.as_ref().is_some_and(|p| p.missing.is_empty()) {
        return Ok(false);
    }
    let existing: Vec<Discourse> = if !r.force && corpus_path.exists() {
        io::read_jsonl(&corpus_path)?
    } else {
        Vec::new()
    };
    let skip: HashSet<String> = existing.iter().map(Discourse::id).collect();

    let registry = config.registry()?;
    let plan = config.generation_plan();
    let client = ep.chat()?;
    let report = generate_corpus(&client, &registry, &config.prompt_set()?, &plan, &skip)
        .await
        .map_err(|e| CliError::Data(e.to_string()))?;

    let mut by_id: HashMap<String, Discourse> = existing.into_iter().map(|d| (d.id(), d)).collect();
    let generated = report.discourses.len();
    for d in report.discourses {
        by_id.insert(d.id(), d);
    }
    let ordered: Vec<Discourse> = corpus::slots(&registry, &plan.prompts, &plan.temperatures, &plan.languages)
        .into_iter()
        .filter_map(|k| by_id.remove(&k.id()))
        .collect();
    io::write_jsonl(&corpus_path, &ordered)?;

    let mut refusals = previous.map(|p| p.refusals).unwrap_or_default();
    refusals.extend(report.refusals);
    let summary = GenerationSummary {
        requests: report.requests,
        generated,
        refusals,
        missing: report.missing,
    };
    io::write_json(&report_path, &summary)?;
    info!(requests = summary.requests, generated, refusals = summary.refusals.len(), "generation finished");
    if !summary.missing.is_empty() {
        return Err(CliError::Stage {
            stage: "generate".into(),
            message: format!("{} slots have no text; re-run to retry them", summary.missing.len()),
            keys: summary.missing.iter().map(|m| m.discourse_id.clone()).collect(),
        });
    }
    Ok(true)
}

fn anonymize(r: &Runner<'_>, config: &RunConfig) -> Result<(), CliError> {
    let mut corpus: Vec<Discourse> = io::read_jsonl(&r.path(CORPUS))?;
    stages::anonymize(&mut corpus, &config.full_registry()?)?;
    io::write_jsonl(&r.path(ANON_CORPUS), &corpus)
}

async fn metrics(r: &Runner<'_>, config: &RunConfig, ep: &Endpoints) -> Result<(), CliError> {
    let corpus: Vec<Discourse> = io::read_jsonl(&r.path(ANON_CORPUS))?;
    let (mattr, empty) = stages::mattr_rows(&corpus, config.mattr(), config.execution());
    if !empty.is_empty() {
        warn!(texts = ?empty, "texts without tokens have no MATTR");
    }
    let mut scored = Vec::new();
    if !config.metrics.scored.is_empty() {
        let client = ep.scorer()?;
        for &m in &config.metrics.scored {
            scored.extend(stages::score_metric(&client, m, &corpus).await?);
        }
    }
    let report = stages::report_rows(&mattr, &scored);
    io::write_csv(&r.path(MATTR), &mattr, &stages::MATTR_HEADER)?;
    io::write_csv(&r.path(METRICS), &scored, &stages::METRIC_HEADER)?;
    io::write_csv(&r.path(SUMMARY), &stages::summary_rows(&report), &stages::SUMMARY_HEADER)?;
    io::write_csv(&r.path(REGARD), &stages::regard_rows(&report), &stages::REGARD_HEADER)
}

fn schedule(r: &Runner<'_>, config: &RunConfig) -> Result<(), CliError> {
    let corpus: Vec<Discourse> = io::read_jsonl(&r.path(ANON_CORPUS))?;
    let ids = stages::bws_selection(&corpus, config.bws.language, &config.bws.prompts);
    let tuples = bws::schedule(&ids, config.bws.repetitions, config.bws.tuple_size, config.bws.seed)
        .map_err(|e| CliError::Data(format!("{} texts selected: {e}", ids.len())))?;
    info!(texts = ids.len(), tuples = tuples.len(), "schedule built");
    io::write_json(&r.path(TUPLES), &tuples)
}

async fn annotate(r: &Runner<'_>, config: &RunConfig, ep: &Endpoints) -> Result<(), CliError> {
    let corpus: Vec<Discourse> = io::read_jsonl(&r.path(ANON_CORPUS))?;
    let tuples: Vec<Tuple> = io::read_json(&r.path(TUPLES))?;
    let bodies: HashMap<String, String> = corpus.into_iter().map(|d| (d.id(), d.body)).collect();
    let pairs = pairs_from_tuples(&tuples, &bodies).map_err(|e| CliError::Data(e.to_string()))?;
    let client = ep.chat()?;
    let outcome = pairwise_annotate(&client, &config.prompt_set()?, config.bws.language, &pairs)
        .await
        .map_err(|e| CliError::Data(e.to_string()))?;
    if !outcome.unresolved.is_empty() {
        warn!(count = outcome.unresolved.len(), "pairs without a majority were dropped");
    }
    stages::write_pairs(&r.path(PAIRS), &outcome.comparisons)?;
    io::write_jsonl(&r.path(ANSWERS), &outcome.answers)?;
    io::write_json(
        &r.path(ANNOTATION_REPORT),
        &AnnotationReport {
            tuples: tuples.len(),
            pairs: pairs.len(),
            comparisons: outcome.comparisons.len(),
            unresolved: outcome.unresolved,
            kappa_same: outcome.kappa_same,
            kappa_reverse: outcome.kappa_reverse,
        },
    )
}

fn rank(r: &Runner<'_>, config: &RunConfig) -> Result<(), CliError> {
    let pairs = stages::read_pairs(&r.path(PAIRS))?;
    let table = stages::rank(&pairs, config.ranking.epsilon, config.ilsr())?;
    if !table.converged {
        warn!(iterations = table.iterations, "ranking stopped at max_iter before converging");
    }
    io::write_csv(&r.path(SCORES), &stages::score_rows(&table), &stages::SCORE_HEADER)?;
    io::write_json(
        &r.path(RANKING_REPORT),
        &RankingReport {
            items: table.len(),
            pairs: pairs.len(),
            epsilon: config.ranking.epsilon,
            iterations: table.iterations,
            converged: table.converged,
        },
    )
}

fn analyze(r: &Runner<'_>, config: &RunConfig) -> Result<(), CliError> {
    let table = stages::read_scores(&r.path(SCORES))?;
    io::write_csv(
        &r.path(COUNTRY_SCORES),
        &stages::country_score_rows(&table),
        &["country_id", "group", "log_score"],
    )?;
    io::write_csv(&r.path(MAP), &stages::map_rows(&table, None), &["country_id", "log_score", "bucket"])?;
    if let Some(path) = &config.analysis.indicators {
        let indicators = IndicatorTable::from_path(path, config.analysis.indicator_year)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let rows = stages::correlate_all(&table, &indicators, config.permutations());
        io::write_csv(&r.path(CORRELATIONS), &rows, &stages::CORRELATION_HEADER)?;
    }
    Ok(())
}
