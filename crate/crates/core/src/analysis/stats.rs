//! Rank correlation with a permutation test, and the Mann–Whitney U test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::AnalysisError;
use crate::Execution;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const DEFAULT_PERMUTATION_SEED: u64 = 20_210_101;

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOptions {
    pub permutations: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            seed: DEFAULT_PERMUTATION_SEED,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-sided permutation p-value, `(hits + 1) / (permutations + 1)`.
    pub p_value: f64,
    /// Complete pairs used.
    pub n: usize,
    /// Pairs dropped because either side was missing.
    pub dropped: usize,
}

/// Spearman's rho over the complete pairs of `x` and `y`.
///
/// Each permutation shuffles the ranks of `y` with its own ChaCha stream
/// derived from `seed`, so the p-value does not depend on thread count.
pub fn spearman(
    x: &[Option<f64>],
    y: &[Option<f64>],
    options: PermutationOptions,
) -> Result<Spearman, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() => Some((*a, *b)),
            _ => None,
        })
        .unzip();
    let n = xs.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPairs(n));
    }
    let rx = average_ranks(&xs);
    let ry = average_ranks(&ys);
    let rho = pearson(&rx, &ry).ok_or(AnalysisError::ConstantInput)?;

    let observed = rho.abs() - 1e-12;
    let hits = options.exec.count_range(options.permutations, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(k as u64);
        let mut shuffled = ry.clone();
        shuffled.shuffle(&mut rng);
        pearson(&rx, &shuffled).is_some_and(|r| r.abs() >= observed)
    });

    Ok(Spearman {
        rho,
        p_value: (hits + 1) as f64 / (options.permutations + 1) as f64,
        n,
        dropped: x.len() - n,
    })
}

/// Significance coding used in report tables.
pub fn stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

impl MannWhitney {
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

/// Two-sided Mann–Whitney U test, normal approximation with tie and
/// continuity corrections. An all-equal pooled sample gives `p = 1`.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::SampleTooSmall(a.len().min(b.len())));
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;

    let n = n1 + n2;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let mean = n1 * n2 / 2.0;
    if variance <= 0.0 {
        return Ok(MannWhitney {
            u,
            z: 0.0,
            p_value: 1.0,
        });
    }
    let diff = u - mean;
    let corrected = (diff.abs() - 0.5).max(0.0) * diff.signum();
    let z = corrected / variance.sqrt();
    let normal = Normal::standard();
    let p_value = (2.0 * normal.sf(z.abs())).min(1.0);
    Ok(MannWhitney { u, z, p_value })
}
