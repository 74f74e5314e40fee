use super::{ComparisonGraph, RankingError, ScoreTable};

pub const ORACLE_MAX_ITEMS: usize = 8;

const TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 1_000_000;

/// Maximises the BTL log-likelihood `Σ w_ij log(π_i / (π_i + π_j))` by exact
/// coordinate ascent on `θ = log π`.
///
/// For fixed `θ_j`, the optimal `θ_i` solves
/// `Σ_j n_ij σ(θ_i - θ_j) = W_i` (`n_ij` comparisons between `i` and `j`,
/// `W_i` wins of `i`). The left side is increasing in `θ_i`, so each
/// coordinate is found by bisection. Sweeps stop once no coordinate moves by
/// more than `1e-10`.
pub fn btl_brute_force(graph: &ComparisonGraph) -> Result<ScoreTable, RankingError> {
    let n = graph.len();
    if n > ORACLE_MAX_ITEMS {
        return Err(RankingError::TooLarge {
            got: n,
            max: ORACLE_MAX_ITEMS,
        });
    }
    graph.check_connected()?;

    let wins: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| graph.effective_wins(i, j)).collect())
        .collect();
    let total_wins: Vec<f64> = wins.iter().map(|row| row.iter().sum()).collect();

    let mut theta = vec![0.0; n];
    let mut sweeps = 0;
    let mut converged = n == 1;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut biggest = 0.0f64;
        for i in 0..n {
            let games: Vec<(f64, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (wins[i][j] + wins[j][i], theta[j]))
                .filter(|&(g, _)| g > 0.0)
                .collect();
            let updated = solve_coordinate(&games, total_wins[i]);
            biggest = biggest.max((updated - theta[i]).abs());
            theta[i] = updated;
        }
        converged = biggest < TOL;
    }

    Ok(ScoreTable::from_log_scores(
        graph.items().to_vec(),
        theta,
        sweeps,
        converged,
    ))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Root of `Σ g σ(x - θ) - target` over `(games, θ)` pairs.
fn solve_coordinate(games: &[(f64, f64)], target: f64) -> f64 {
    let f = |x: f64| games.iter().map(|&(g, t)| g * sigmoid(x - t)).sum::<f64>() - target;
    let mut lo = -1.0;
    let mut hi = 1.0;
    while f(lo) > 0.0 {
        lo *= 2.0;
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_item_closed_form() {
        let mut g = ComparisonGraph::new(["A", "B"]);
        g.add_win("A", "B", 3.0).unwrap();
        g.add_win("B", "A", 1.0).unwrap();
        let s = btl_brute_force(&g).unwrap();
        assert!(s.converged);
        assert!((s.scores[0] / s.scores[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn one_item() {
        let s = btl_brute_force(&ComparisonGraph::new(["x"])).unwrap();
        assert_eq!(s.scores, [1.0]);
    }

    #[test]
    fn refuses_large_graphs() {
        let g = ComparisonGraph::new((0..9).map(|i| i.to_string()));
        assert_eq!(
            btl_brute_force(&g),
            Err(RankingError::TooLarge { got: 9, max: 8 })
        );
    }

    #[test]
    fn stationary_condition_holds() {
        // At the optimum each item's expected wins equal its observed wins.
        let mut g = ComparisonGraph::new(["a", "b", "c"]);
        for (w, l, c) in [("a", "b", 4.0), ("b", "a", 1.0), ("b", "c", 3.0), ("c", "b", 2.0), ("c", "a", 1.0), ("a", "c", 2.0)] {
            g.add_win(w, l, c).unwrap();
        }
        let s = btl_brute_force(&g).unwrap();
        for i in 0..3 {
            let observed: f64 = (0..3).map(|j| g.wins(i, j)).sum();
            let expected: f64 = (0..3)
                .filter(|&j| j != i)
                .map(|j| (g.wins(i, j) + g.wins(j, i)) * s.scores[i] / (s.scores[i] + s.scores[j]))
                .sum();
            assert!((observed - expected).abs() < 1e-8);
        }
    }
}
