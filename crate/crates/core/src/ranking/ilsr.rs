use nalgebra::{DMatrix, DVector};

use super::{center, ComparisonGraph, RankingError, ScoreTable};
use crate::Execution;

/// Largest item count solved with a dense LU factorisation; larger graphs
/// fall back to power iteration on the uniformised chain.
pub const DENSE_SOLVE_LIMIT: usize = 2000;

const POWER_TOL: f64 = 1e-14;
const POWER_MAX_STEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlsrOptions {
    /// Stop once `max |Δ log π|` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub exec: Execution,
    pub dense_limit: usize,
}

impl Default for IlsrOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            exec: Execution::default(),
            dense_limit: DENSE_SOLVE_LIMIT,
        }
    }
}

/// Iterative Luce spectral ranking.
///
/// Each iteration builds a continuous-time Markov chain whose rate from
/// `j` to `i` is `Σ_{i beat j} 1 / (π_i + π_j)` and replaces `π` with its
/// stationary distribution. The fixed point is the Bradley–Terry maximum
/// likelihood estimate. Returns `converged = false` when `max_iter` is hit.
pub fn ilsr(graph: &ComparisonGraph, options: IlsrOptions) -> Result<ScoreTable, RankingError> {
    graph.check_connected()?;
    let n = graph.len();
    let items = graph.items().to_vec();
    if n == 1 {
        return Ok(ScoreTable::from_log_scores(items, vec![0.0], 0, true));
    }

    let wins = graph.dense_wins();
    let mut log_pi = vec![0.0f64; n];
    let mut rates = vec![0.0; n * n];

    for iteration in 1..=options.max_iter {
        let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();

        // rates[i * n + j]: rate of the j -> i transition.
        options.exec.for_each_row(&mut rates, n, |i, row| {
            let w = &wins[i * n..(i + 1) * n];
            for (j, r) in row.iter_mut().enumerate() {
                *r = if i == j { 0.0 } else { w[j] / (pi[i] + pi[j]) };
            }
        });
        let mut out_rate = vec![0.0; n];
        for row in rates.chunks(n) {
            for (o, r) in out_rate.iter_mut().zip(row) {
                *o += r;
            }
        }

        let stationary = if n <= options.dense_limit {
            dense_stationary(&rates, &out_rate, n)?
        } else {
            power_stationary(&rates, &out_rate, n, options.exec)
        };

        let mut next: Vec<f64> = stationary
            .iter()
            .map(|&p| p.max(f64::MIN_POSITIVE).ln())
            .collect();
        center(&mut next);
        let delta = next
            .iter()
            .zip(&log_pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        log_pi = next;
        if delta < options.tol {
            return Ok(ScoreTable::from_log_scores(items, log_pi, iteration, true));
        }
    }
    Ok(ScoreTable::from_log_scores(
        items,
        log_pi,
        options.max_iter,
        false,
    ))
}

/// Solves `π Q = 0, Σ π = 1` by LU, with the last balance equation replaced
/// by the normalisation constraint.
fn dense_stationary(rates: &[f64], out_rate: &[f64], n: usize) -> Result<Vec<f64>, RankingError> {
    let mut a = DMatrix::from_row_slice(n, n, rates);
    for (i, &o) in out_rate.iter().enumerate() {
        a[(i, i)] = -o;
    }
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(RankingError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(RankingError::Singular);
    }
    Ok(x.iter().copied().collect())
}

/// Power iteration on the uniformised chain `P = I + Q / Λ`.
fn power_stationary(rates: &[f64], out_rate: &[f64], n: usize, exec: Execution) -> Vec<f64> {
    let lambda = out_rate.iter().copied().fold(0.0, f64::max) * 1.0001;
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..POWER_MAX_STEPS {
        let next: Vec<f64> = exec.map_range(n, |i| {
            let row = &rates[i * n..(i + 1) * n];
            let inflow: f64 = row.iter().zip(&p).map(|(r, q)| r * q).sum();
            p[i] * (1.0 - out_rate[i] / lambda) + inflow / lambda
        });
        let total: f64 = next.iter().sum();
        let change: f64 = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a / total - b).abs())
            .sum();
        p = next.into_iter().map(|v| v / total).collect();
        if change < POWER_TOL {
            break;
        }
    }
    p
}
