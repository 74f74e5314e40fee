//! Character-level edit distance, the similarity built on it, and the
//! round/alias merging that keeps near-duplicate generations only once.

use super::{CorpusError, Discourse};

/// Levenshtein distance with unit costs over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }

    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - edit_distance / max(len1, len2)`, lengths in characters.
///
/// Two empty strings are identical, so they score 1.0.
pub fn similarity(text1: &str, text2: &str) -> f64 {
    let longest = text1.chars().count().max(text2.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(text1, text2) as f64 / longest as f64
}

/// Similarity threshold in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeThreshold(f64);

impl MergeThreshold {
    pub fn new(value: f64) -> Result<Self, CorpusError> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(CorpusError::Threshold(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub const MERGE_SEPARATOR: &str = "\n";

/// Keeps `round1` when the two rounds are similar enough, otherwise appends
/// `round2` after a newline.
pub fn merge_rounds(round1: &str, round2: &str, threshold: MergeThreshold) -> String {
    if similarity(round1, round2) >= threshold.value() {
        round1.to_string()
    } else {
        let mut merged = String::with_capacity(round1.len() + round2.len() + 1);
        merged.push_str(round1);
        merged.push_str(MERGE_SEPARATOR);
        merged.push_str(round2);
        merged
    }
}

/// Folds the discourses produced for each nationality alias of one country
/// into a single discourse, left to right in alias order.
pub fn merge_aliases(
    discourses: Vec<Discourse>,
    threshold: MergeThreshold,
) -> Result<Discourse, CorpusError> {
    let mut iter = discourses.into_iter();
    let mut acc = iter.next().ok_or(CorpusError::EmptyMerge)?;
    for next in iter {
        if next.key != acc.key {
            return Err(CorpusError::KeyMismatch {
                expected: acc.key.id(),
                found: next.key.id(),
            });
        }
        acc.body = merge_rounds(&acc.body, &next.body, threshold);
        acc.rounds_merged += next.rounds_merged;
        acc.refused |= next.refused;
    }
    acc.refresh_counts();
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{DiscourseKey, Language, PromptId};

    // Full-matrix recurrence kept separate from the two-row implementation.
    fn oracle_distance(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1)
                    .min(d[i][j - 1] + 1)
                    .min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    fn key() -> DiscourseKey {
        DiscourseKey::new("afghanistan", PromptId::P1, 0.0, Language::Zh)
    }

    #[test]
    fn kitten_sitting() {
        assert_eq!(oracle_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert!((similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_lengths() {
        assert_eq!(similarity("abc", "abc"), 1.0);
        assert_eq!(similarity("", "abc"), 0.0);
        assert_eq!(similarity("", ""), 1.0);
    }

    #[test]
    fn counts_characters_not_bytes() {
        assert_eq!(edit_distance("你好", "你们好"), 1);
        assert!((similarity("你好", "你们好") - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_fixed_cases() {
        let cases = [
            ("", ""),
            ("a", ""),
            ("flaw", "lawn"),
            ("intention", "execution"),
            ("人们刻板印象", "人们的刻板印象中"),
            ("Türkiye", "Turkey"),
        ];
        for (a, b) in cases {
            assert_eq!(edit_distance(a, b), oracle_distance(a, b), "{a} vs {b}");
        }
    }

    #[test]
    fn merge_examples() {
        let en = MergeThreshold::new(0.8).unwrap();
        assert_eq!(merge_rounds("same text", "same text", en), "same text");
        assert_eq!(merge_rounds("aaaa", "bbbb", en), "aaaa\nbbbb");
    }

    #[test]
    fn zh_threshold_boundary() {
        // 20 characters with 5 substitutions: similarity exactly 0.75.
        let a = "一二三四五六七八九十甲乙丙丁戊己庚辛壬癸";
        let b = "一二三四五六七八九十甲乙丙丁戊子丑寅卯辰";
        assert_eq!(oracle_distance(a, b), 5);
        assert!((similarity(a, b) - 0.75).abs() < 1e-12);

        let zh = MergeThreshold::new(0.7).unwrap();
        let en = MergeThreshold::new(0.8).unwrap();
        assert_eq!(merge_rounds(a, b, zh), a);
        assert_eq!(merge_rounds(a, b, en), format!("{a}\n{b}"));
        // Exactly at the threshold still counts as similar.
        assert_eq!(merge_rounds(a, b, MergeThreshold::new(0.75).unwrap()), a);
    }

    #[test]
    fn threshold_domain() {
        assert!(MergeThreshold::new(0.0).is_err());
        assert!(MergeThreshold::new(1.2).is_err());
        assert!(MergeThreshold::new(f64::NAN).is_err());
        assert!(MergeThreshold::new(1.0).is_ok());
    }

    #[test]
    fn alias_fold() {
        let t = MergeThreshold::new(0.7).unwrap();
        let single = Discourse::new(key(), "只有一个");
        assert_eq!(merge_aliases(vec![single.clone()], t).unwrap().body, "只有一个");

        let twin = merge_aliases(vec![single.clone(), single.clone()], t).unwrap();
        assert_eq!(twin.body, "只有一个");
        assert_eq!(twin.rounds_merged, 2);

        // First two differ by one char out of 10 (similarity 0.9); the third
        // shares nothing with the first.
        let first = "甲乙丙丁戊己庚辛壬癸";
        let second = "甲乙丙丁戊己庚辛壬子";
        let third = "春夏秋冬";
        assert!(similarity(first, second) >= 0.7);
        assert!(similarity(first, third) < 0.7);
        let merged = merge_aliases(
            vec![
                Discourse::new(key(), first),
                Discourse::new(key(), second),
                Discourse::new(key(), third),
            ],
            t,
        )
        .unwrap();
        assert_eq!(merged.body, format!("{first}\n{third}"));
        assert_eq!(merged.rounds_merged, 3);
    }

    #[test]
    fn alias_fold_errors() {
        let t = MergeThreshold::new(0.7).unwrap();
        assert!(matches!(merge_aliases(vec![], t), Err(CorpusError::EmptyMerge)));
        let mut other = Discourse::new(key(), "b");
        other.key.temperature = 0.3;
        assert!(matches!(
            merge_aliases(vec![Discourse::new(key(), "a"), other], t),
            Err(CorpusError::KeyMismatch { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn similarity_is_symmetric_and_bounded(a in "[a-c你好]{0,12}", b in "[a-c你好]{0,12}") {
                let s = similarity(&a, &b);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(s, similarity(&b, &a));
                prop_assert_eq!(similarity(&a, &a), 1.0);
                prop_assert_eq!(edit_distance(&a, &b), oracle_distance(&a, &b));
            }

            #[test]
            fn merge_is_idempotent(a in ".{0,40}", t in 0.01f64..=1.0) {
                let t = MergeThreshold::new(t).unwrap();
                prop_assert_eq!(merge_rounds(&a, &a, t), a);
            }
        }
    }
}
