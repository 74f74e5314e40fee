use std::collections::HashMap;

use biaseval_core::bws::{kappa, majority, ComparisonPair, OrderTag, Source, Tuple};
use biaseval_core::prompts::{PromptError, PromptSet};
use biaseval_core::Language;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{ChatClient, ChatError, ANNOTATION_TEMPERATURE};

/// Rounds 1 and 2 keep the original order, round 3 swaps it.
pub const ROUNDS: u32 = 3;

#[derive(Debug, Error)]
pub enum PairwiseError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("no body for text `{0}`")]
    MissingText(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

impl Choice {
    pub fn flip(self) -> Self {
        match self {
            Choice::A => Choice::B,
            Choice::B => Choice::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPair {
    pub pair_id: String,
    pub a_id: String,
    pub a_text: String,
    pub b_id: String,
    pub b_text: String,
}

/// One round's answer, expressed in the original (unswapped) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAnswer {
    pub pair_id: String,
    pub round: u32,
    pub order_tag: OrderTag,
    pub choice: Option<Choice>,
    pub reply: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOutcome {
    pub answers: Vec<PairwiseAnswer>,
    pub comparisons: Vec<ComparisonPair>,
    pub unresolved: Vec<String>,
    /// Agreement between rounds 1 and 2 over pairs where both parsed.
    pub kappa_same: Option<f64>,
    /// Agreement between rounds 1 and 3 (mapped back).
    pub kappa_reverse: Option<f64>,
}

fn letter(c: char) -> Option<Choice> {
    match c {
        'A' | 'a' | 'Ａ' | 'ａ' => Some(Choice::A),
        'B' | 'b' | 'Ｂ' | 'ｂ' => Some(Choice::B),
        _ => None,
    }
}

fn is_word(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_ascii_alphanumeric())
}

fn explicit(chars: &[char]) -> Option<Choice> {
    let lower: Vec<char> = chars.iter().map(|c| c.to_ascii_lowercase()).collect();
    for i in 0..lower.len() {
        let rest = &lower[i..];
        let after = if rest.starts_with(&['t', 'e', 'x', 't']) && !is_word(i.checked_sub(1).map(|j| lower[j])) {
            i + 4
        } else if rest.starts_with(&['文', '本']) {
            i + 2
        } else {
            continue;
        };
        let mut j = after;
        while lower.get(j).is_some_and(|c| *c == ' ') {
            j += 1;
        }
        if let Some(choice) = lower.get(j).copied().and_then(letter) {
            if !is_word(lower.get(j + 1).copied()) {
                return Some(choice);
            }
        }
    }
    None
}

fn bare(chars: &[char]) -> Option<Choice> {
    for (i, &c) in chars.iter().enumerate() {
        if !matches!(c, 'A' | 'B' | 'Ａ' | 'Ｂ') {
            continue;
        }
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        if is_word(prev) || is_word(next) {
            continue;
        }
        // "A friendly text ..." uses A as an article.
        if c == 'A' && next == Some(' ') && chars.get(i + 2).is_some_and(|c| c.is_ascii_lowercase()) {
            continue;
        }
        return letter(c);
    }
    None
}

/// Reads the chosen text from a reply. An explicit "Text A" / "文本A" (first
/// occurrence) beats a bare standalone letter.
pub fn parse_choice(reply: &str) -> Option<Choice> {
    let chars: Vec<char> = reply.chars().collect();
    explicit(&chars).or_else(|| bare(&chars))
}

/// Majority over the three mapped answers; `Same` when rounds 1 and 2 alone
/// settle it, `Reverse` when the swapped round was needed.
pub fn resolve(answers: &[Option<Choice>]) -> Option<(Choice, OrderTag)> {
    let winner = majority(answers)?;
    let tag = if answers.len() >= 2 && answers[0] == Some(winner) && answers[1] == Some(winner) {
        OrderTag::Same
    } else {
        OrderTag::Reverse
    };
    Some((winner, tag))
}

/// All `k(k-1)/2` within-tuple pairs, in tuple order.
pub fn pairs_from_tuples(tuples: &[Tuple], bodies: &HashMap<String, String>) -> Result<Vec<TextPair>, PairwiseError> {
    let body = |id: &str| bodies.get(id).cloned().ok_or_else(|| PairwiseError::MissingText(id.to_string()));
    let mut out = Vec::new();
    for t in tuples {
        for i in 0..t.text_ids.len() {
            for j in i + 1..t.text_ids.len() {
                let (a, b) = (&t.text_ids[i], &t.text_ids[j]);
                out.push(TextPair {
                    pair_id: format!("{}:{a}:{b}", t.tuple_id),
                    a_id: a.clone(),
                    a_text: body(a)?,
                    b_id: b.clone(),
                    b_text: body(b)?,
                });
            }
        }
    }
    Ok(out)
}

/// Three rounds per pair at the annotation temperature; round 3 presents
/// the texts swapped and its answer is mapped back. Resolved pairs become
/// [`ComparisonPair`]s with `source = llm`.
pub async fn pairwise_annotate(
    client: &ChatClient,
    prompts: &PromptSet,
    language: Language,
    pairs: &[TextPair],
) -> Result<PairwiseOutcome, PairwiseError> {
    let template = prompts.pairwise(language)?;
    let mut jobs = Vec::with_capacity(pairs.len() * ROUNDS as usize);
    for (p, pair) in pairs.iter().enumerate() {
        for round in 1..=ROUNDS {
            let swapped = round == ROUNDS;
            let prompt = if swapped {
                template.render(&pair.b_text, &pair.a_text)
            } else {
                template.render(&pair.a_text, &pair.b_text)
            };
            jobs.push((p, round, swapped, prompt));
        }
    }
    let in_flight = client.config().max_in_flight.max(1);
    let replies: Vec<_> = stream::iter(jobs)
        .map(|(p, round, swapped, prompt)| async move {
            (p, round, swapped, client.ask(ANNOTATION_TEMPERATURE, prompt).await)
        })
        .buffered(in_flight)
        .collect()
        .await;

    let mut outcome = PairwiseOutcome::default();
    let mut per_pair: Vec<Vec<Option<Choice>>> = vec![Vec::new(); pairs.len()];
    for (p, round, swapped, reply) in replies {
        let reply = match reply {
            Ok(r) => r,
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(_) => String::new(),
        };
        let parsed = parse_choice(&reply);
        let choice = if swapped { parsed.map(Choice::flip) } else { parsed };
        per_pair[p].push(choice);
        outcome.answers.push(PairwiseAnswer {
            pair_id: pairs[p].pair_id.clone(),
            round,
            order_tag: if swapped { OrderTag::Reverse } else { OrderTag::Same },
            choice,
            reply,
        });
    }

    let (mut r1, mut r2, mut s1, mut s3) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (pair, answers) in pairs.iter().zip(&per_pair) {
        if let (Some(a), Some(b)) = (answers[0], answers[1]) {
            r1.push(a);
            r2.push(b);
        }
        if let (Some(a), Some(c)) = (answers[0], answers[2]) {
            s1.push(a);
            s3.push(c);
        }
        match resolve(answers) {
            Some((winner, order_tag)) => {
                let (w, l) = match winner {
                    Choice::A => (&pair.a_id, &pair.b_id),
                    Choice::B => (&pair.b_id, &pair.a_id),
                };
                outcome.comparisons.push(ComparisonPair {
                    winner_id: w.clone(),
                    loser_id: l.clone(),
                    source: Source::Llm,
                    order_tag,
                    round: if order_tag == OrderTag::Same { 2 } else { ROUNDS },
                });
            }
            None => outcome.unresolved.push(pair.pair_id.clone()),
        }
    }
    outcome.kappa_same = kappa(&r1, &r2).ok();
    outcome.kappa_reverse = kappa(&s1, &s3).ok();
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parser_fixtures() {
        let cases: &[(&str, Option<Choice>)] = &[
            ("A", Some(Choice::A)),
            ("B.", Some(Choice::B)),
            ("Text B is friendlier", Some(Choice::B)),
            ("text a", Some(Choice::A)),
            ("I choose Text A over Text B.", Some(Choice::A)),
            ("B. Text A is more offensive", Some(Choice::A)),
            ("A friendly reading favours B", Some(Choice::B)),
            ("文本A更加友好。", Some(Choice::A)),
            ("我选择文本 B", Some(Choice::B)),
            ("文本Ｂ", Some(Choice::B)),
            ("答案：B", Some(Choice::B)),
            ("Both texts are fine.", None),
            ("Neither ABC nor BBC", None),
            ("", None),
        ];
        for (reply, want) in cases {
            assert_eq!(parse_choice(reply), *want, "{reply}");
        }
    }

    #[test]
    fn majority_after_mapping() {
        // Round 3 said "B" on the swapped order, which is A.
        let answers = [Some(Choice::A), Some(Choice::A), Some(Choice::B.flip())];
        assert_eq!(resolve(&answers), Some((Choice::A, OrderTag::Same)));
        assert_eq!(resolve(&[Some(Choice::A), Some(Choice::B), None]), None);
        assert_eq!(
            resolve(&[Some(Choice::A), Some(Choice::B), Some(Choice::B)]),
            Some((Choice::B, OrderTag::Reverse))
        );
    }

    #[test]
    fn six_pairs_per_tuple() {
        let t = Tuple {
            tuple_id: 7,
            text_ids: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            round: 1,
        };
        let bodies: HashMap<String, String> =
            ["a", "b", "c", "d"].iter().map(|s| (s.to_string(), s.to_uppercase())).collect();
        let pairs = pairs_from_tuples(&[t.clone()], &bodies).unwrap();
        assert_eq!(pairs.len(), 6);
        assert_eq!(pairs[0].pair_id, "7:a:b");
        assert_eq!(pairs[5].b_text, "D");
        let mut partial = bodies.clone();
        partial.remove("c");
        assert!(matches!(pairs_from_tuples(&[t], &partial), Err(PairwiseError::MissingText(id)) if id == "c"));
    }

    proptest! {
        #[test]
        fn explicit_mention_wins(first in prop::bool::ANY, noise in "[c-su-z ]{0,20}") {
            let (c, other) = if first { ('A', 'B') } else { ('B', 'A') };
            let reply = format!("{other}? {noise} Text {c} {noise}");
            let want = if first { Choice::A } else { Choice::B };
            prop_assert_eq!(parse_choice(&reply), Some(want));
        }
    }
}
