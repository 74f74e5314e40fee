use std::fmt;
use std::str::FromStr;

use biaseval_core::corpus::Discourse;
use biaseval_core::prompts::{PromptError, PromptSet};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::chat::{ChatClient, ChatError, ANNOTATION_TEMPERATURE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotMode {
    Zero,
    Few,
}

impl fmt::Display for ShotMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShotMode::Zero => "zero",
            ShotMode::Few => "few",
        })
    }
}

impl FromStr for ShotMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" | "zero-shot" => Ok(ShotMode::Zero),
            "few" | "few-shot" => Ok(ShotMode::Few),
            _ => Err(format!("unknown shot mode `{s}`")),
        }
    }
}

/// 1 is the friendliest, 5 the most offensive; `None` when the reply had no
/// usable digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectScore {
    pub discourse_id: String,
    pub shot_mode: ShotMode,
    pub score: Option<u8>,
    pub reply: String,
}

fn digit_value(c: char) -> Option<u32> {
    match c {
        '0'..='9' => c.to_digit(10),
        '０'..='９' => Some(c as u32 - '０' as u32),
        _ => None,
    }
}

/// Part of a word or a longer number, so not a standalone digit.
fn joins(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_ascii_alphanumeric() || digit_value(c).is_some() || c == '_')
}

/// First standalone digit 1–5 (ASCII or fullwidth). Digits that are part of
/// a longer number, a decimal (`4.5`) or an ASCII word are skipped.
pub fn parse_direct_score(reply: &str) -> Option<u8> {
    let chars: Vec<char> = reply.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let Some(v) = digit_value(c) else { continue };
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        if joins(prev) || joins(next) {
            continue;
        }
        let decimal_before = prev == Some('.') && i >= 2 && digit_value(chars[i - 2]).is_some();
        let decimal_after = next == Some('.') && chars.get(i + 2).is_some_and(|&c| digit_value(c).is_some());
        if decimal_before || decimal_after {
            continue;
        }
        if (1..=5).contains(&v) {
            return Some(v as u8);
        }
    }
    None
}

/// Prompt text followed by the discourse body on a new line.
pub fn direct_prompt(prompts: &PromptSet, discourse: &Discourse, mode: ShotMode) -> Result<String, PromptError> {
    let p = prompts.direct(discourse.key.language)?;
    let instruction = match mode {
        ShotMode::Zero => &p.zero_shot,
        ShotMode::Few => &p.few_shot,
    };
    Ok(format!("{instruction}\n{}", discourse.body))
}

/// Scores each discourse once. Transport failures other than
/// authentication leave the score unparseable with an empty reply.
pub async fn direct_score(
    client: &ChatClient,
    prompts: &PromptSet,
    discourses: &[Discourse],
    mode: ShotMode,
) -> Result<Vec<DirectScore>, DirectError> {
    let requests: Vec<(String, String)> = discourses
        .iter()
        .map(|d| Ok((d.id(), direct_prompt(prompts, d, mode)?)))
        .collect::<Result<_, PromptError>>()?;
    let in_flight = client.config().max_in_flight.max(1);
    let results: Vec<_> = stream::iter(requests)
        .map(|(id, prompt)| async move { (id, client.ask(ANNOTATION_TEMPERATURE, prompt).await) })
        .buffered(in_flight)
        .collect()
        .await;
    results
        .into_iter()
        .map(|(discourse_id, reply)| match reply {
            Ok(reply) => Ok(DirectScore {
                discourse_id,
                shot_mode: mode,
                score: parse_direct_score(&reply),
                reply,
            }),
            Err(e) if e.is_fatal() => Err(e.into()),
            Err(_) => Ok(DirectScore {
                discourse_id,
                shot_mode: mode,
                score: None,
                reply: String::new(),
            }),
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum DirectError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}
