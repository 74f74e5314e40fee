//! Tokenization and the moving-average type-token ratio (MATTR).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MASK_TOKEN;
use crate::{Execution, Language};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("cannot compute MATTR of an empty token sequence")]
    Empty,
    #[error("MATTR window must be at least 1")]
    ZeroWindow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub language: Language,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>, language: Language) -> Self {
        Self { tokens, language }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// English: maximal alphanumeric runs, lowercased. Chinese: one token per
/// alphanumeric character. In both, punctuation and whitespace are dropped
/// and a `[MASK]` placeholder counts as a single token.
pub fn tokenize(body: &str, language: Language) -> TokenSequence {
    let mut tokens = Vec::new();
    for (i, piece) in body.split(MASK_TOKEN).enumerate() {
        if i > 0 {
            tokens.push(match language {
                Language::En => "mask".to_string(),
                Language::Zh => MASK_TOKEN.to_string(),
            });
        }
        match language {
            Language::En => tokens.extend(
                piece
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|w| !w.is_empty())
                    .map(str::to_lowercase),
            ),
            Language::Zh => tokens.extend(
                piece
                    .chars()
                    .filter(|c| c.is_alphanumeric())
                    .map(String::from),
            ),
        }
    }
    TokenSequence::new(tokens, language)
}

/// How many windows of length `L` are averaged for a text of `N` tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowCount {
    /// `N - L` windows, starting at offsets `0..N-L`.
    #[default]
    #[serde(rename = "n-l")]
    NMinusL,
    /// `N - L + 1` windows, covering every full window.
    #[serde(rename = "n-l+1")]
    NMinusLPlusOne,
}

impl std::str::FromStr for WindowCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n-l" => Ok(WindowCount::NMinusL),
            "n-l+1" => Ok(WindowCount::NMinusLPlusOne),
            other => Err(format!("unknown window count `{other}` (n-l or n-l+1)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MattrConfig {
    pub window: usize,
    pub windows: WindowCount,
}

impl Default for MattrConfig {
    fn default() -> Self {
        Self {
            window: 32,
            windows: WindowCount::NMinusL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MattrResult {
    pub value: f64,
    pub window: usize,
    pub n_tokens: usize,
    /// The text was not longer than the window, so plain TTR was used.
    pub fallback_used: bool,
}

pub fn mattr(seq: &TokenSequence, config: MattrConfig) -> Result<MattrResult, LexError> {
    let n = seq.len();
    let l = config.window;
    if n == 0 {
        return Err(LexError::Empty);
    }
    if l == 0 {
        return Err(LexError::ZeroWindow);
    }

    if n <= l {
        let mut seen: HashMap<&str, ()> = HashMap::with_capacity(n);
        for t in &seq.tokens {
            seen.insert(t.as_str(), ());
        }
        return Ok(MattrResult {
            value: seen.len() as f64 / n as f64,
            window: l,
            n_tokens: n,
            fallback_used: true,
        });
    }

    let windows = match config.windows {
        WindowCount::NMinusL => n - l,
        WindowCount::NMinusLPlusOne => n - l + 1,
    };

    let tokens: Vec<&str> = seq.tokens.iter().map(String::as_str).collect();
    let mut counts: HashMap<&str, usize> = HashMap::with_capacity(l);
    for &t in &tokens[..l] {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut total = counts.len();
    for start in 1..windows {
        let out = tokens[start - 1];
        let c = counts.get_mut(out).expect("outgoing token was counted");
        *c -= 1;
        if *c == 0 {
            counts.remove(out);
        }
        *counts.entry(tokens[start + l - 1]).or_insert(0) += 1;
        total += counts.len();
    }

    Ok(MattrResult {
        value: total as f64 / (l * windows) as f64,
        window: l,
        n_tokens: n,
        fallback_used: false,
    })
}

/// MATTR for many sequences, in input order.
pub fn mattr_batch(
    seqs: &[TokenSequence],
    config: MattrConfig,
    exec: Execution,
) -> Vec<Result<MattrResult, LexError>> {
    exec.map(seqs, |s| mattr(s, config))
}
