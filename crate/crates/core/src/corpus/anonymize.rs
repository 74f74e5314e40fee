//! Replacement of country names and demonyms with `[MASK]`.
//!
//! Matching rules:
//! * Chinese: exact substring match.
//! * English: case-insensitive, and the alias must stand as a word. The
//!   character before it must not be alphanumeric, and the character after
//!   it must not be alphanumeric either, except for a plural `s` closing the
//!   word ("Dominicans" becomes "[MASK]s"). This keeps "Oman" out of "woman".
//!
//! Overlapping candidates are resolved leftmost first, then longest, so
//! "Dominican Republic" wins over "Dominican".

use aho_corasick::{AhoCorasick, MatchKind};

use super::CorpusError;
use crate::Language;

pub const MASK_TOKEN: &str = "[MASK]";

/// A half-open span of character indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct Anonymizer {
    language: Language,
    automaton: AhoCorasick,
}

impl Anonymizer {
    pub fn new<S: AsRef<str>>(language: Language, aliases: &[S]) -> Result<Self, CorpusError> {
        let patterns: Vec<String> = aliases
            .iter()
            .map(|a| a.as_ref().trim())
            .filter(|a| !a.is_empty())
            .map(|a| fold(language, a))
            .collect();
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(&patterns)
            .map_err(|e| CorpusError::Registry(format!("alias automaton: {e}")))?;
        Ok(Self {
            language,
            automaton,
        })
    }

    pub fn language(&self) -> Language {
        self.language
    }

    /// Alias occurrences in `body` as character spans, after boundary
    /// filtering and leftmost-longest selection.
    pub fn find(&self, body: &str) -> Vec<Span> {
        let chars: Vec<char> = body.chars().collect();
        let folded: String = chars.iter().map(|&c| fold_char(self.language, c)).collect();
        // Byte offset in `folded` -> char index.
        let mut char_at = vec![usize::MAX; folded.len() + 1];
        for (ci, (bi, _)) in folded.char_indices().enumerate() {
            char_at[bi] = ci;
        }
        char_at[folded.len()] = chars.len();

        let mut candidates: Vec<Span> = self
            .automaton
            .find_overlapping_iter(&folded)
            .map(|m| Span {
                start: char_at[m.start()],
                end: char_at[m.end()],
            })
            .filter(|s| self.language == Language::Zh || is_word(&chars, *s))
            .collect();
        candidates.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));

        let mut chosen = Vec::new();
        let mut cursor = 0;
        for span in candidates {
            if span.start >= cursor {
                cursor = span.end;
                chosen.push(span);
            }
        }
        chosen
    }

    pub fn anonymize(&self, body: &str) -> String {
        let spans = self.find(body);
        if spans.is_empty() {
            return body.to_string();
        }
        let chars: Vec<char> = body.chars().collect();
        let mut out = String::with_capacity(body.len());
        let mut pos = 0;
        for span in spans {
            out.extend(&chars[pos..span.start]);
            out.push_str(MASK_TOKEN);
            pos = span.end;
        }
        out.extend(&chars[pos..]);
        out
    }

    pub fn contains_alias(&self, body: &str) -> bool {
        !self.find(body).is_empty()
    }
}

fn fold(language: Language, s: &str) -> String {
    s.chars().map(|c| fold_char(language, c)).collect()
}

/// Lowercases English one character at a time so that character indices in
/// the folded text line up with the original.
fn fold_char(language: Language, c: char) -> char {
    if language == Language::Zh {
        return c;
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub(crate) fn is_word(chars: &[char], span: Span) -> bool {
    if span.start > 0 && chars[span.start - 1].is_alphanumeric() {
        return false;
    }
    match chars.get(span.end) {
        None => true,
        Some(c) if !c.is_alphanumeric() => true,
        Some('s') | Some('S') => chars
            .get(span.end + 1)
            .is_none_or(|c| !c.is_alphanumeric()),
        Some(_) => false,
    }
}
