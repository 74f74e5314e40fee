use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biaseval_cli::config::RunConfig;
use biaseval_cli::pipeline::{self, AnnotationReport, GenerationSummary, RunOptions};
use biaseval_cli::stages::{self, LabelRow, PairFilter, RoundRecord};
use biaseval_cli::{io, CliError};
use biaseval_core::analysis::IndicatorTable;
use biaseval_core::bws::{self, Judgment, OrderTag, Source, Tuple};
use biaseval_core::corpus::Discourse;
use biaseval_core::scoring::{Compatibility, Metric};
use biaseval_core::{Language, PromptId};
use biaseval_remote::direct::{direct_score, ShotMode};
use biaseval_remote::generate::generate_corpus;
use biaseval_remote::mock::{self, StubMode};
use biaseval_remote::pairwise::{pairs_from_tuples, pairwise_annotate};
use biaseval_remote::{ChatClient, ScorerClient};
use biaseval_service::ServiceConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::info;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "biaseval", version, about = "Nationality-bias evaluation pipeline")]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage into one output directory, resuming finished stages.
    Run {
        #[arg(long)]
        out: PathBuf,
        /// Re-run stages whose outputs already exist.
        #[arg(long)]
        force: bool,
        /// Use in-process stub chat and scorer endpoints.
        #[arg(long)]
        mock: bool,
    },
    #[command(subcommand)]
    Corpus(CorpusCmd),
    #[command(subcommand)]
    Metrics(MetricsCmd),
    #[command(subcommand)]
    Bws(BwsCmd),
    /// Rank texts from a comparison-pairs CSV.
    Rank(RankArgs),
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Serve the best-worst annotation API.
    Serve(ServeArgs),
    #[command(subcommand)]
    Llm(LlmCmd),
    /// Stand-alone stub endpoints for offline runs.
    #[command(subcommand)]
    Mock(MockCmd),
    #[command(subcommand)]
    Config(ConfigCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Merge per-round, per-alias records into one discourse per slot.
    Merge {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Mask every country name and demonym.
    Anonymize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Lexical richness per text.
    Mattr {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Model-based scores from the external scorer.
    Score {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Metrics to request (SM, HS, OF, RG); the configured set by default.
        #[arg(long, value_delimiter = ',')]
        metric: Vec<Metric>,
    },
}

#[derive(Subcommand)]
enum BwsCmd {
    /// Build the tuple schedule from a corpus.
    Schedule {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        language: Option<Language>,
        #[arg(long, value_delimiter = ',')]
        prompts: Vec<PromptId>,
        #[arg(long)]
        repetitions: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Expand best/worst judgments (JSONL) into comparison pairs.
    Expand {
        #[arg(long)]
        tuples: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Cohen's kappa between two `item_id,label` CSVs.
    Kappa {
        a: PathBuf,
        b: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Human,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Same,
    Reverse,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Pseudo-wins added between every pair of items.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    source: Option<SourceArg>,
    #[arg(long)]
    order_tag: Option<OrderArg>,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Spearman correlation of country scores against indicators.
    Correlate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        indicators: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        year: Option<i32>,
    },
    /// Mann–Whitney U test between one numeric column of two CSVs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Defaults to `log_score`, else `value`.
        #[arg(long)]
        column: Option<String>,
    },
    /// Choropleth buckets per country.
    Map {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Only discourses generated at this temperature.
        #[arg(long)]
        temperature: Option<f64>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    schedule: PathBuf,
    /// Anonymized corpus holding every scheduled text.
    #[arg(long)]
    corpus: PathBuf,
    /// Annotator roster (TOML).
    #[arg(long)]
    annotators: PathBuf,
    /// Judgment log directory; judgments live only in memory when unset.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

#[derive(Subcommand)]
enum LlmCmd {
    /// Generate the corpus for the configured plan.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise self-annotation of every within-tuple pair.
    Pairwise {
        #[arg(long)]
        tuples: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-to-five offensiveness score per text.
    Direct {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "zero")]
        mode: ShotMode,
    },
}

#[derive(Subcommand)]
enum MockCmd {
    Chat {
        #[arg(long, default_value = "127.0.0.1:8089")]
        bind: SocketAddr,
    },
    Scorer {
        #[arg(long, default_value = "127.0.0.1:8090")]
        bind: SocketAddr,
    },
}

#[derive(Subcommand)]
enum ConfigCmd {
    /// Print the effective configuration.
    Show,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::from_path(p),
        None => Ok(RunConfig::default()),
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn chat_client(cfg: &RunConfig) -> Result<ChatClient, CliError> {
    ChatClient::from_env(cfg.chat.clone()).map_err(|e| CliError::Config(format!("chat client: {e}")))
}

async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, CliError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Config(format!("cannot bind {addr}: {e}")))
}

async fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Run { out, force, mock } => {
            let summary = pipeline::run(&cfg, &RunOptions { out, force, mock }).await?;
            for s in &summary.stages {
                println!("{:<10} {}", s.stage, if s.ran { "ran" } else { "skipped" });
            }
        }
        Command::Corpus(CorpusCmd::Merge { input, output }) => {
            let records: Vec<RoundRecord> = io::read_jsonl(&input)?;
            let merged = stages::merge_records(records, |l| cfg.threshold(l))?;
            info!(discourses = merged.len(), "merged");
            io::write_jsonl(&output, &merged)?;
        }
        Command::Corpus(CorpusCmd::Anonymize { input, output }) => {
            let mut corpus: Vec<Discourse> = io::read_jsonl(&input)?;
            stages::anonymize(&mut corpus, &cfg.full_registry()?)?;
            io::write_jsonl(&output, &corpus)?;
        }
        Command::Metrics(MetricsCmd::Mattr { corpus, output, window }) => {
            let corpus: Vec<Discourse> = io::read_jsonl(&corpus)?;
            let mut m = cfg.mattr();
            if let Some(w) = window {
                if w == 0 {
                    return Err(CliError::Config("--window must be at least 1".into()));
                }
                m.window = w;
            }
            let (rows, empty) = stages::mattr_rows(&corpus, m, cfg.execution());
            if !empty.is_empty() {
                tracing::warn!(texts = ?empty, "texts without tokens skipped");
            }
            io::write_csv(&output, &rows, &stages::MATTR_HEADER)?;
        }
        Command::Metrics(MetricsCmd::Score { corpus, output, metric }) => {
            let corpus: Vec<Discourse> = io::read_jsonl(&corpus)?;
            let client = ScorerClient::new(cfg.scorer.clone(), Compatibility::bundled())
                .map_err(|e| CliError::Config(e.to_string()))?;
            let metrics = if metric.is_empty() { cfg.metrics.scored.clone() } else { metric };
            let mut rows = Vec::new();
            for m in metrics {
                rows.extend(stages::score_metric(&client, m, &corpus).await?);
            }
            io::write_csv(&output, &rows, &stages::METRIC_HEADER)?;
        }
        Command::Bws(BwsCmd::Schedule {
            corpus,
            output,
            language,
            prompts,
            repetitions,
            seed,
        }) => {
            let corpus: Vec<Discourse> = io::read_jsonl(&corpus)?;
            let prompts = if prompts.is_empty() { cfg.bws.prompts.clone() } else { prompts };
            let ids = stages::bws_selection(&corpus, language.unwrap_or(cfg.bws.language), &prompts);
            let tuples = bws::schedule(
                &ids,
                repetitions.unwrap_or(cfg.bws.repetitions),
                cfg.bws.tuple_size,
                seed.unwrap_or(cfg.bws.seed),
            )
            .map_err(data)?;
            info!(texts = ids.len(), tuples = tuples.len(), "scheduled");
            io::write_json(&output, &tuples)?;
        }
        Command::Bws(BwsCmd::Expand { tuples, judgments, output }) => {
            let tuples: Vec<Tuple> = io::read_json(&tuples)?;
            let judgments: Vec<Judgment> = io::read_jsonl(&judgments)?;
            let pairs = stages::expand_judgments(&tuples, &judgments)?;
            stages::write_pairs(&output, &pairs)?;
        }
        Command::Bws(BwsCmd::Kappa { a, b }) => {
            let a: Vec<LabelRow> = io::read_csv(&a)?;
            let b: Vec<LabelRow> = io::read_csv(&b)?;
            let r = stages::kappa_report(&a, &b)?;
            println!("{}", serde_json::to_string_pretty(&r).map_err(data)?);
        }
        Command::Rank(args) => {
            let filter = PairFilter {
                source: args.source.map(|s| match s {
                    SourceArg::Human => Source::Human,
                    SourceArg::Llm => Source::Llm,
                }),
                order_tag: args.order_tag.map(|o| match o {
                    OrderArg::Same => OrderTag::Same,
                    OrderArg::Reverse => OrderTag::Reverse,
                }),
            };
            let pairs: Vec<_> = stages::read_pairs(&args.pairs)?.into_iter().filter(|p| filter.keep(p)).collect();
            let eps = args.epsilon.unwrap_or(cfg.ranking.epsilon);
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(CliError::Config(format!("--epsilon must be finite and ≥ 0, got {eps}")));
            }
            let table = stages::rank(&pairs, eps, cfg.ilsr())?;
            info!(items = table.len(), iterations = table.iterations, converged = table.converged, "ranked");
            io::write_csv(&args.output, &stages::score_rows(&table), &stages::SCORE_HEADER)?;
        }
        Command::Analyze(AnalyzeCmd::Correlate {
            scores,
            indicators,
            output,
            year,
        }) => {
            let table = stages::read_scores(&scores)?;
            let ind = IndicatorTable::from_path(&indicators, year.or(cfg.analysis.indicator_year))
                .map_err(|e| CliError::Data(format!("{}: {e}", indicators.display())))?;
            let rows = stages::correlate_all(&table, &ind, cfg.permutations());
            io::write_csv(&output, &rows, &stages::CORRELATION_HEADER)?;
        }
        Command::Analyze(AnalyzeCmd::Compare { a, b, column }) => {
            let (va, skipped_a) = stages::read_column(&a, column.as_deref())?;
            let (vb, skipped_b) = stages::read_column(&b, column.as_deref())?;
            if skipped_a + skipped_b > 0 {
                tracing::warn!(skipped_a, skipped_b, "non-numeric cells skipped");
            }
            let r = stages::compare(&va, &vb)?;
            println!("{}", serde_json::to_string_pretty(&r).map_err(data)?);
        }
        Command::Analyze(AnalyzeCmd::Map {
            scores,
            output,
            temperature,
        }) => {
            let table = stages::read_scores(&scores)?;
            io::write_csv(
                &output,
                &stages::map_rows(&table, temperature),
                &["country_id", "log_score", "bucket"],
            )?;
        }
        Command::Serve(args) => {
            let roster = ServiceConfig::from_path(&args.annotators).map_err(|e| CliError::Config(e.to_string()))?;
            let service =
                biaseval_service::open(&args.schedule, &args.corpus, roster, args.data_dir.as_deref()).map_err(data)?;
            let listener = bind(args.bind).await?;
            info!(addr = %args.bind, "annotation service listening");
            tokio::select! {
                r = biaseval_service::serve(listener, service) => r.map_err(data)?,
                _ = tokio::signal::ctrl_c() => info!("shutting down"),
            }
        }
        Command::Llm(LlmCmd::Generate { out }) => {
            let client = chat_client(&cfg)?;
            let report = generate_corpus(
                &client,
                &cfg.registry()?,
                &cfg.prompt_set()?,
                &cfg.generation_plan(),
                &HashSet::new(),
            )
            .await
            .map_err(data)?;
            io::write_jsonl(&out.join(pipeline::CORPUS), &report.discourses)?;
            let summary = GenerationSummary {
                requests: report.requests,
                generated: report.discourses.len(),
                refusals: report.refusals,
                missing: report.missing,
            };
            io::write_json(&out.join(pipeline::GENERATION_REPORT), &summary)?;
            if !summary.missing.is_empty() {
                return Err(CliError::Stage {
                    stage: "generate".into(),
                    message: format!("{} slots have no text", summary.missing.len()),
                    keys: summary.missing.into_iter().map(|m| m.discourse_id).collect(),
                });
            }
        }
        Command::Llm(LlmCmd::Pairwise { tuples, corpus, out }) => {
            let tuples: Vec<Tuple> = io::read_json(&tuples)?;
            let corpus: Vec<Discourse> = io::read_jsonl(&corpus)?;
            let bodies: HashMap<String, String> = corpus.into_iter().map(|d| (d.id(), d.body)).collect();
            let pairs = pairs_from_tuples(&tuples, &bodies).map_err(data)?;
            let client = chat_client(&cfg)?;
            let outcome = pairwise_annotate(&client, &cfg.prompt_set()?, cfg.bws.language, &pairs)
                .await
                .map_err(data)?;
            stages::write_pairs(&out.join(pipeline::PAIRS), &outcome.comparisons)?;
            io::write_jsonl(&out.join(pipeline::ANSWERS), &outcome.answers)?;
            io::write_json(
                &out.join(pipeline::ANNOTATION_REPORT),
                &AnnotationReport {
                    tuples: tuples.len(),
                    pairs: pairs.len(),
                    comparisons: outcome.comparisons.len(),
                    unresolved: outcome.unresolved,
                    kappa_same: outcome.kappa_same,
                    kappa_reverse: outcome.kappa_reverse,
                },
            )?;
        }
        Command::Llm(LlmCmd::Direct { corpus, output, mode }) => {
            let corpus: Vec<Discourse> = io::read_jsonl(&corpus)?;
            let kept: Vec<Discourse> = corpus.into_iter().filter(|d| !d.refused).collect();
            let client = chat_client(&cfg)?;
            let scores = direct_score(&client, &cfg.prompt_set()?, &kept, mode).await.map_err(data)?;
            io::write_jsonl(&output, &scores)?;
        }
        Command::Mock(MockCmd::Chat { bind: addr }) => {
            let listener = bind(addr).await?;
            info!(%addr, "stub chat endpoint listening");
            mock::run_chat(listener, mock::scripted_responder(cfg.prompt_set()?)).await.map_err(data)?;
        }
        Command::Mock(MockCmd::Scorer { bind: addr }) => {
            let listener = bind(addr).await?;
            info!(%addr, "stub scorer listening");
            mock::run_scorer(listener, StubMode::Hash).await.map_err(data)?;
        }
        Command::Config(ConfigCmd::Show) => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();
    match execute(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
