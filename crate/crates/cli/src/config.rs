//! Run configuration. Every constant the pipeline depends on is a named
//! key so that deviations from the defaults show up in a diff of the file.

use std::path::{Path, PathBuf};

use biaseval_core::corpus::{MergeThreshold, Registry, REPLICATION_TEMPERATURES};
use biaseval_core::lexmetrics::{MattrConfig, WindowCount};
use biaseval_core::prompts::PromptSet;
use biaseval_core::ranking::DEFAULT_SMOOTHING;
use biaseval_core::scoring::Metric;
use biaseval_core::{Execution, Language, PromptId};
use biaseval_remote::generate::GenerationPlan;
use biaseval_remote::{ChatConfig, ScorerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub metrics: MetricsSection,
    pub bws: BwsSection,
    pub ranking: RankingSection,
    pub analysis: AnalysisSection,
    pub chat: ChatConfig,
    pub scorer: ScorerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub languages: Vec<Language>,
    pub prompts: Vec<PromptId>,
    pub temperatures: Vec<f64>,
    /// Generation rounds per alias.
    pub rounds: u32,
    pub threshold_zh: f64,
    pub threshold_en: f64,
    /// Country ids to generate for; empty means the whole registry.
    pub countries: Vec<String>,
    /// Country registry CSV; the bundled registry when unset.
    pub registry: Option<PathBuf>,
    /// Prompt template file; the bundled templates when unset.
    pub prompt_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub mattr_window: usize,
    pub mattr_windows: WindowCount,
    /// Scorer metrics to request; each is sent only for languages it
    /// supports.
    pub scored: Vec<Metric>,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Annotator {
    /// Pairwise self-annotation through the chat endpoint.
    Llm,
    /// Pairs exported from the annotation service, placed in the run
    /// directory as `pairs.csv`.
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BwsSection {
    /// Texts entering the schedule: this language and these prompts, all
    /// temperatures.
    pub language: Language,
    pub prompts: Vec<PromptId>,
    pub repetitions: u32,
    pub tuple_size: usize,
    pub seed: u64,
    pub annotator: Annotator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingSection {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub permutations: usize,
    pub seed: u64,
    /// Long-format indicators CSV; correlation is skipped when unset.
    pub indicators: Option<PathBuf>,
    pub indicator_year: Option<i32>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            languages: Language::ALL.to_vec(),
            prompts: PromptId::ALL.to_vec(),
            temperatures: REPLICATION_TEMPERATURES.to_vec(),
            rounds: 2,
            threshold_zh: Language::Zh.default_merge_threshold(),
            threshold_en: Language::En.default_merge_threshold(),
            countries: Vec::new(),
            registry: None,
            prompt_file: None,
        }
    }
}

impl Default for MetricsSection {
    fn default() -> Self {
        let m = MattrConfig::default();
        Self {
            mattr_window: m.window,
            mattr_windows: m.windows,
            scored: Metric::ALL.to_vec(),
            parallel: true,
        }
    }
}

impl Default for BwsSection {
    fn default() -> Self {
        Self {
            language: Language::Zh,
            prompts: vec![PromptId::P1],
            repetitions: 12,
            tuple_size: biaseval_core::bws::TUPLE_SIZE,
            seed: 7,
            annotator: Annotator::Llm,
        }
    }
}

impl Default for RankingSection {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_SMOOTHING,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let p = biaseval_core::analysis::PermutationOptions::default();
        Self {
            permutations: p.permutations,
            seed: p.seed,
            indicators: None,
            indicator_year: None,
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.corpus.registry, &mut cfg.corpus.prompt_file, &mut cfg.analysis.indicators]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        for (name, t) in [("threshold_zh", self.corpus.threshold_zh), ("threshold_en", self.corpus.threshold_en)] {
            if MergeThreshold::new(t).is_err() {
                return bad(format!("corpus.{name} must lie in (0, 1], got {t}"));
            }
        }
        if let Some(t) = self.corpus.temperatures.iter().find(|t| !(0.0..=2.0).contains(*t)) {
            return bad(format!("corpus.temperatures must lie in [0, 2], got {t}"));
        }
        if self.corpus.languages.is_empty() || self.corpus.prompts.is_empty() || self.corpus.temperatures.is_empty() {
            return bad("corpus.languages, corpus.prompts and corpus.temperatures must be non-empty".into());
        }
        if self.corpus.rounds == 0 {
            return bad("corpus.rounds must be at least 1".into());
        }
        if self.metrics.mattr_window == 0 {
            return bad("metrics.mattr_window must be at least 1".into());
        }
        if self.bws.tuple_size < 2 || self.bws.repetitions == 0 {
            return bad("bws.tuple_size must be ≥ 2 and bws.repetitions ≥ 1".into());
        }
        if !(self.ranking.epsilon >= 0.0 && self.ranking.epsilon.is_finite()) {
            return bad(format!("ranking.epsilon must be finite and ≥ 0, got {}", self.ranking.epsilon));
        }
        if self.ranking.tol.is_nan() || self.ranking.tol <= 0.0 || self.ranking.max_iter == 0 {
            return bad("ranking.tol must be > 0 and ranking.max_iter ≥ 1".into());
        }
        if self.analysis.permutations == 0 {
            return bad("analysis.permutations must be at least 1".into());
        }
        Ok(())
    }

    /// Every country of the registry file, regardless of
    /// `corpus.countries`. Anonymization masks against this so that a
    /// text about one country cannot leak another's name.
    pub fn full_registry(&self) -> Result<Registry, CliError> {
        match &self.corpus.registry {
            Some(p) => Registry::from_path(p).map_err(|e| CliError::Config(format!("registry: {e}"))),
            None => Ok(Registry::bundled()),
        }
    }

    /// The countries generated for.
    pub fn registry(&self) -> Result<Registry, CliError> {
        let full = self.full_registry()?;
        if self.corpus.countries.is_empty() {
            return Ok(full);
        }
        full.subset(&self.corpus.countries)
            .map_err(|e| CliError::Config(format!("corpus.countries: {e}")))
    }

    pub fn prompt_set(&self) -> Result<PromptSet, CliError> {
        match &self.corpus.prompt_file {
            Some(p) => PromptSet::from_path(p).map_err(|e| CliError::Config(format!("prompt file: {e}"))),
            None => Ok(PromptSet::bundled()),
        }
    }

    pub fn generation_plan(&self) -> GenerationPlan {
        GenerationPlan {
            prompts: self.corpus.prompts.clone(),
            temperatures: self.corpus.temperatures.clone(),
            languages: self.corpus.languages.clone(),
            rounds: self.corpus.rounds,
            threshold_zh: self.corpus.threshold_zh,
            threshold_en: self.corpus.threshold_en,
        }
    }

    pub fn threshold(&self, language: Language) -> MergeThreshold {
        let t = match language {
            Language::Zh => self.corpus.threshold_zh,
            Language::En => self.corpus.threshold_en,
        };
        MergeThreshold::new(t).expect("validated")
    }

    pub fn mattr(&self) -> MattrConfig {
        MattrConfig {
            window: self.metrics.mattr_window,
            windows: self.metrics.mattr_windows,
        }
    }

    pub fn execution(&self) -> Execution {
        if self.metrics.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn ilsr(&self) -> biaseval_core::ranking::IlsrOptions {
        biaseval_core::ranking::IlsrOptions {
            tol: self.ranking.tol,
            max_iter: self.ranking.max_iter,
            exec: self.execution(),
            ..Default::default()
        }
    }

    pub fn permutations(&self) -> biaseval_core::analysis::PermutationOptions {
        biaseval_core::analysis::PermutationOptions {
            permutations: self.analysis.permutations,
            seed: self.analysis.seed,
            exec: self.execution(),
        }
    }

    /// Discourse slots a full generation run produces.
    pub fn slot_count(&self) -> Result<usize, CliError> {
        Ok(biaseval_core::corpus::slot_count(
            self.registry()?.len(),
            self.corpus.prompts.len(),
            self.corpus.temperatures.len(),
            self.corpus.languages.len(),
        ))
    }
}
