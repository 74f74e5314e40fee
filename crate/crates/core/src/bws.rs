//! Best-worst scaling: tuple schedules, judgment expansion into pairwise
//! comparisons, majority votes over repeated answers and Cohen's kappa.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Texts per tuple used for annotation.
pub const TUPLE_SIZE: usize = 4;

const MAX_RESHUFFLES: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum BwsError {
    #[error("need at least {k} texts to build tuples of {k}, got {n}")]
    TooFewTexts { n: usize, k: usize },
    #[error("tuple size must be at least 2, got {0}")]
    TupleSize(usize),
    #[error("duplicate text id `{0}` in input")]
    DuplicateText(String),
    #[error("could not build a schedule without repeated tuples after {0} reshuffles")]
    RepeatedTuples(usize),
    #[error("judgment for tuple {judgment} applied to tuple {tuple}")]
    WrongTuple { judgment: u32, tuple: u32 },
    #[error("best and worst must differ (both `{0}`)")]
    SameBestWorst(String),
    #[error("`{0}` is not part of the tuple")]
    NotInTuple(String),
    #[error("rater label lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("kappa needs at least one rated item")]
    NoItems,
    #[error("pairs file: {0}")]
    PairsFile(String),
}

/// A set of texts shown together for one best/worst judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple {
    pub tuple_id: u32,
    pub text_ids: Vec<String>,
    pub round: u32,
}

impl Tuple {
    pub fn contains(&self, id: &str) -> bool {
        self.text_ids.iter().any(|t| t == id)
    }
}

/// One annotator's pick of the friendliest (`best_id`) and most offensive
/// (`worst_id`) text of a tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub tuple_id: u32,
    pub annotator_id: String,
    pub best_id: String,
    pub worst_id: String,
    pub timestamp: DateTime<Utc>,
}

impl Judgment {
    pub fn validate(&self, tuple: &Tuple) -> Result<(), BwsError> {
        if self.tuple_id != tuple.tuple_id {
            return Err(BwsError::WrongTuple {
                judgment: self.tuple_id,
                tuple: tuple.tuple_id,
            });
        }
        if self.best_id == self.worst_id {
            return Err(BwsError::SameBestWorst(self.best_id.clone()));
        }
        for id in [&self.best_id, &self.worst_id] {
            if !tuple.contains(id) {
                return Err(BwsError::NotInTuple(id.clone()));
            }
        }
        Ok(())
    }

    /// True when both judgments pick the same best and worst.
    pub fn agrees_with(&self, other: &Judgment) -> bool {
        self.best_id == other.best_id && self.worst_id == other.worst_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderTag {
    Same,
    Reverse,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Human => "human",
            Source::Llm => "llm",
        })
    }
}

impl fmt::Display for OrderTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderTag::Same => "same",
            OrderTag::Reverse => "reverse",
        })
    }
}

impl FromStr for OrderTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same" => Ok(OrderTag::Same),
            "reverse" => Ok(OrderTag::Reverse),
            _ => Err(format!("unknown order tag `{s}`")),
        }
    }
}

/// "`winner_id` is friendlier than `loser_id`".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComparisonPair {
    pub winner_id: String,
    pub loser_id: String,
    pub source: Source,
    pub order_tag: OrderTag,
    pub round: u32,
}

/// Builds `ceil(n/k) * repetitions` tuples from independent seeded shuffles.
///
/// Each shuffle is cut into consecutive blocks of `k`; a short final block is
/// topped up with texts from the start of the same shuffle that are not
/// already in it. A shuffle that would recreate an existing tuple is redrawn.
/// Tuple ids are consecutive from 1; `round` is the 1-based repetition.
pub fn schedule<S: AsRef<str>>(
    text_ids: &[S],
    repetitions: u32,
    k: usize,
    seed: u64,
) -> Result<Vec<Tuple>, BwsError> {
    if k < 2 {
        return Err(BwsError::TupleSize(k));
    }
    let n = text_ids.len();
    if n < k {
        return Err(BwsError::TooFewTexts { n, k });
    }
    let mut unique = HashSet::with_capacity(n);
    for id in text_ids {
        if !unique.insert(id.as_ref()) {
            return Err(BwsError::DuplicateText(id.as_ref().to_string()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut tuples = Vec::with_capacity(n.div_ceil(k) * repetitions as usize);
    let mut order: Vec<usize> = (0..n).collect();

    for round in 1..=repetitions {
        let mut attempt = 0;
        let blocks = loop {
            order.shuffle(&mut rng);
            let blocks = partition(&order, k);
            let keys: Vec<Vec<usize>> = blocks.iter().map(|b| sorted(b)).collect();
            let fresh = keys.iter().all(|key| !seen.contains(key))
                && keys.iter().collect::<HashSet<_>>().len() == keys.len();
            if fresh {
                seen.extend(keys);
                break blocks;
            }
            attempt += 1;
            if attempt >= MAX_RESHUFFLES {
                return Err(BwsError::RepeatedTuples(MAX_RESHUFFLES));
            }
        };
        for block in blocks {
            tuples.push(Tuple {
                tuple_id: tuples.len() as u32 + 1,
                text_ids: block.iter().map(|&i| text_ids[i].as_ref().to_string()).collect(),
                round,
            });
        }
    }
    Ok(tuples)
}

fn partition(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut blocks: Vec<Vec<usize>> = order.chunks(k).map(<[usize]>::to_vec).collect();
    if let Some(last) = blocks.last_mut() {
        if last.len() < k {
            let fill: Vec<usize> = order
                .iter()
                .copied()
                .filter(|i| !last.contains(i))
                .take(k - last.len())
                .collect();
            last.extend(fill);
        }
    }
    blocks
}

fn sorted(block: &[usize]) -> Vec<usize> {
    let mut v = block.to_vec();
    v.sort_unstable();
    v
}

/// Expands a best/worst judgment into pairwise comparisons: best beats every
/// other text and every middle text beats worst (`2k - 3` pairs, 5 for
/// tuples of four).
pub fn expand(judgment: &Judgment, tuple: &Tuple) -> Result<Vec<ComparisonPair>, BwsError> {
    judgment.validate(tuple)?;
    let pair = |winner: &str, loser: &str| ComparisonPair {
        winner_id: winner.to_string(),
        loser_id: loser.to_string(),
        source: Source::Human,
        order_tag: OrderTag::Same,
        round: tuple.round,
    };
    let best = judgment.best_id.as_str();
    let worst = judgment.worst_id.as_str();
    let mut out: Vec<ComparisonPair> = tuple
        .text_ids
        .iter()
        .filter(|t| *t != best)
        .map(|t| pair(best, t))
        .collect();
    out.extend(
        tuple
            .text_ids
            .iter()
            .filter(|t| *t != best && *t != worst)
            .map(|t| pair(t, worst)),
    );
    Ok(out)
}

/// The pick chosen at least twice, or `None` when no pick reaches two or the
/// top count is tied. `None` entries (unparseable answers) never count.
pub fn majority<T: Eq + Hash + Clone>(choices: &[Option<T>]) -> Option<T> {
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for c in choices.iter().flatten() {
        *counts.entry(c).or_insert(0) += 1;
    }
    let top = counts.values().copied().max()?;
    if top < 2 || counts.values().filter(|&&c| c == top).count() > 1 {
        return None;
    }
    counts
        .into_iter()
        .find(|&(_, c)| c == top)
        .map(|(k, _)| k.clone())
}

/// Cohen's kappa with marginal-product chance agreement.
///
/// When chance agreement is 1 (both raters constant on the same label) the
/// raters agree perfectly and 1.0 is returned.
pub fn kappa<L: Eq + Hash>(rater1: &[L], rater2: &[L]) -> Result<f64, BwsError> {
    if rater1.len() != rater2.len() {
        return Err(BwsError::LengthMismatch(rater1.len(), rater2.len()));
    }
    if rater1.is_empty() {
        return Err(BwsError::NoItems);
    }
    // Integer counts keep exact fractions exact until the final division.
    let n = rater1.len() as u128;
    let agree = rater1.iter().zip(rater2).filter(|(a, b)| a == b).count() as u128;

    let mut m1: HashMap<&L, u128> = HashMap::new();
    let mut m2: HashMap<&L, u128> = HashMap::new();
    for (a, b) in rater1.iter().zip(rater2) {
        *m1.entry(a).or_insert(0) += 1;
        *m2.entry(b).or_insert(0) += 1;
    }
    let chance: u128 = m1
        .iter()
        .map(|(label, &c1)| c1 * m2.get(label).copied().unwrap_or(0))
        .sum();

    if chance == n * n {
        return Ok(if agree == n { 1.0 } else { 0.0 });
    }
    let num = (n * agree) as f64 - chance as f64;
    Ok(num / (n * n - chance) as f64)
}

/// Label used when comparing two annotators' judgments of the same tuple:
/// the positions of the best and worst picks within the tuple.
pub fn judgment_label(judgment: &Judgment, tuple: &Tuple) -> (usize, usize) {
    let pos = |id: &str| tuple.text_ids.iter().position(|t| t == id).unwrap_or(usize::MAX);
    (pos(&judgment.best_id), pos(&judgment.worst_id))
}

/// Header of the comparison-pair CSV format.
pub const PAIRS_HEADER: [&str; 5] = ["winner_id", "loser_id", "source", "order_tag", "round"];

/// Writes pairs as CSV; the header is written even when `pairs` is empty.
pub fn write_pairs_csv<W: std::io::Write>(pairs: &[ComparisonPair], out: W) -> Result<(), BwsError> {
    let err = |e: csv::Error| BwsError::PairsFile(e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(PAIRS_HEADER).map_err(err)?;
    for p in pairs {
        w.serialize(p).map_err(err)?;
    }
    w.flush().map_err(|e| BwsError::PairsFile(e.to_string()))
}

pub fn read_pairs_csv<R: std::io::Read>(input: R) -> Result<Vec<ComparisonPair>, BwsError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    r.deserialize()
        .map(|row| {
            let p: ComparisonPair = row.map_err(|e| BwsError::PairsFile(e.to_string()))?;
            if p.winner_id == p.loser_id {
                return Err(BwsError::PairsFile(format!("`{}` compared with itself", p.winner_id)));
            }
            Ok(p)
        })
        .collect()
}
