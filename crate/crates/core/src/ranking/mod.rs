//! Pairwise comparisons to continuous scores under the Bradley–Terry–Luce
//! model.
//!
//! [`ilsr`] is the production path (iterative Luce spectral ranking);
//! [`btl_brute_force`] maximises the same likelihood by direct coordinate
//! ascent and exists to check it on small graphs.

mod ilsr;
mod oracle;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bws::ComparisonPair;

pub use ilsr::{ilsr, IlsrOptions, DENSE_SOLVE_LIMIT};
pub use oracle::{btl_brute_force, ORACLE_MAX_ITEMS};

/// Default pseudo-win count added in both directions between every pair.
pub const DEFAULT_SMOOTHING: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("comparison graph has no items")]
    Empty,
    #[error("ranking needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("comparison graph is not strongly connected; components: {}", DisplayComponents(.components))]
    Disconnected { components: Vec<Vec<String>> },
    #[error("brute-force oracle handles at most {max} items, got {got}")]
    TooLarge { got: usize, max: usize },
    #[error("smoothing must be finite and non-negative, got {0}")]
    Smoothing(f64),
    #[error("win count must be finite and non-negative, got {0}")]
    WinCount(f64),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{0}` cannot beat itself")]
    SelfComparison(String),
    #[error("stationary distribution solve failed")]
    Singular,
}

struct DisplayComponents<'a>(&'a [Vec<String>]);

impl fmt::Display for DisplayComponents<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{{{}}}", c.join(", "))?;
        }
        Ok(())
    }
}

/// Win counts between items plus uniform smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonGraph {
    items: Vec<String>,
    index: HashMap<String, usize>,
    /// `(winner, loser) -> count`.
    wins: BTreeMap<(usize, usize), f64>,
    smoothing: f64,
}

impl ComparisonGraph {
    pub fn new<S: Into<String>>(items: impl IntoIterator<Item = S>) -> Self {
        let mut g = Self {
            items: Vec::new(),
            index: HashMap::new(),
            wins: BTreeMap::new(),
            smoothing: 0.0,
        };
        for item in items {
            g.ensure_item(item.into());
        }
        g
    }

    /// Items in order of first appearance, then one win per pair.
    pub fn from_pairs(pairs: &[ComparisonPair], smoothing: f64) -> Result<Self, RankingError> {
        Self::with_items(std::iter::empty::<String>(), pairs, smoothing)
    }

    /// Like [`from_pairs`](Self::from_pairs) but also registers items that
    /// may never have been compared.
    pub fn with_items<S: Into<String>>(
        items: impl IntoIterator<Item = S>,
        pairs: &[ComparisonPair],
        smoothing: f64,
    ) -> Result<Self, RankingError> {
        let mut g = Self::new(items);
        g.set_smoothing(smoothing)?;
        for p in pairs {
            g.ensure_item(p.winner_id.clone());
            g.ensure_item(p.loser_id.clone());
            g.add_win(&p.winner_id, &p.loser_id, 1.0)?;
        }
        Ok(g)
    }

    fn ensure_item(&mut self, id: String) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        self.index.insert(id.clone(), self.items.len());
        self.items.push(id);
        self.items.len() - 1
    }

    pub fn set_smoothing(&mut self, smoothing: f64) -> Result<(), RankingError> {
        if !smoothing.is_finite() || smoothing < 0.0 {
            return Err(RankingError::Smoothing(smoothing));
        }
        self.smoothing = smoothing;
        Ok(())
    }

    pub fn add_win(&mut self, winner: &str, loser: &str, count: f64) -> Result<(), RankingError> {
        if !count.is_finite() || count < 0.0 {
            return Err(RankingError::WinCount(count));
        }
        if winner == loser {
            return Err(RankingError::SelfComparison(winner.to_string()));
        }
        let w = self.position(winner)?;
        let l = self.position(loser)?;
        *self.wins.entry((w, l)).or_insert(0.0) += count;
        Ok(())
    }

    fn position(&self, id: &str) -> Result<usize, RankingError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| RankingError::UnknownItem(id.to_string()))
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Raw count of "`winner` beat `loser`", without smoothing.
    pub fn wins(&self, winner: usize, loser: usize) -> f64 {
        self.wins.get(&(winner, loser)).copied().unwrap_or(0.0)
    }

    /// Count including smoothing.
    pub fn effective_wins(&self, winner: usize, loser: usize) -> f64 {
        if winner == loser {
            0.0
        } else {
            self.wins(winner, loser) + self.smoothing
        }
    }

    /// Non-zero raw win entries as `((winner, loser), count)`.
    pub fn win_entries(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.wins.iter().map(|(&k, &v)| (k, v)).filter(|&(_, v)| v > 0.0)
    }

    /// Dense `n x n` matrix with `m[i * n + j]` = effective wins of `i` over `j`.
    pub fn dense_wins(&self) -> Vec<f64> {
        let n = self.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m[i * n + j] = self.smoothing;
                }
            }
        }
        for ((w, l), c) in self.win_entries() {
            m[w * n + l] += c;
        }
        m
    }

    /// Strongly connected components of the "loser points to winner" graph,
    /// as item ids. A maximum-likelihood estimate exists iff there is exactly
    /// one component.
    pub fn components(&self) -> Vec<Vec<String>> {
        let n = self.len();
        if n == 0 {
            return Vec::new();
        }
        if self.smoothing > 0.0 {
            return vec![self.items.clone()];
        }
        let mut g = DiGraph::<(), ()>::with_capacity(n, self.wins.len());
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for ((w, l), _) in self.win_entries() {
            g.add_edge(nodes[l], nodes[w], ());
        }
        let mut comps: Vec<Vec<String>> = kosaraju_scc(&g)
            .into_iter()
            .map(|c| {
                let mut ids: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                ids.sort_unstable();
                ids.into_iter().map(|i| self.items[i].clone()).collect()
            })
            .collect();
        comps.sort();
        comps
    }

    pub(crate) fn check_connected(&self) -> Result<(), RankingError> {
        if self.is_empty() {
            return Err(RankingError::Empty);
        }
        let comps = self.components();
        if comps.len() > 1 {
            return Err(RankingError::Disconnected { components: comps });
        }
        Ok(())
    }
}

/// Per-item scores normalised to geometric mean one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub items: Vec<String>,
    pub scores: Vec<f64>,
    /// Natural log of `scores`; sums to zero.
    pub log_scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ScoreTable {
    pub(crate) fn from_log_scores(
        items: Vec<String>,
        mut log_scores: Vec<f64>,
        iterations: usize,
        converged: bool,
    ) -> Self {
        center(&mut log_scores);
        Self {
            items,
            scores: log_scores.iter().map(|l| l.exp()).collect(),
            log_scores,
            iterations,
            converged,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn score(&self, id: &str) -> Option<f64> {
        self.items.iter().position(|i| i == id).map(|i| self.scores[i])
    }

    pub fn log_score(&self, id: &str) -> Option<f64> {
        self.items.iter().position(|i| i == id).map(|i| self.log_scores[i])
    }

    /// Item indices from highest to lowest score.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.log_scores[b].total_cmp(&self.log_scores[a]));
        idx
    }
}

pub(crate) fn center(log_scores: &mut [f64]) {
    if log_scores.is_empty() {
        return;
    }
    let mean = log_scores.iter().sum::<f64>() / log_scores.len() as f64;
    for l in log_scores.iter_mut() {
        *l -= mean;
    }
}

/// Builds a graph from comparison pairs, adds `smoothing` pseudo-wins in both
/// directions between every pair of items, and runs [`ilsr`].
pub fn rank_with_smoothing(
    pairs: &[ComparisonPair],
    smoothing: f64,
    options: IlsrOptions,
) -> Result<ScoreTable, RankingError> {
    let graph = ComparisonGraph::from_pairs(pairs, smoothing)?;
    if graph.len() < 2 {
        return Err(RankingError::TooFewItems(graph.len()));
    }
    ilsr(&graph, options)
}
