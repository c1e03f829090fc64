use nalgebra::{DMatrix, DVector};

use super::generator::RateMatrix;
use super::MarkovError;

/// Residual `||Q P||_inf` an accepted solution must meet.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Negative entries no larger than this in magnitude are treated as rounding noise.
pub const CLAMP_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Dense below [`SolverOptions::dense_limit`] states, power iteration above.
    Auto,
    Dense,
    Power,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub method: SolveMethod,
    pub dense_limit: usize,
    /// Power iteration stops once the residual drops below this.
    pub target_residual: f64,
    pub max_iterations: usize,
    /// Starting vector for power iteration; uniform when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolveMethod::Auto,
            dense_limit: 1_500,
            target_residual: 1e-12,
            max_iterations: 20_000_000,
            initial: None,
        }
    }
}

/// Stationary distribution of a truncated chain.
#[derive(Debug, Clone)]
pub struct SteadyStateDistribution {
    pub probabilities: Vec<f64>,
    /// Probability mass on the truncation frontier.
    pub truncation_mass_bound: f64,
    /// `||Q P||_inf` of the returned vector.
    pub residual: f64,
    /// Power iterations spent; zero for the dense path.
    pub iterations: usize,
}

impl SteadyStateDistribution {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

pub fn solve_steady_state(q: &RateMatrix) -> Result<SteadyStateDistribution, MarkovError> {
    solve_steady_state_with(q, &SolverOptions::default())
}

pub fn solve_steady_state_with(
    q: &RateMatrix,
    options: &SolverOptions,
) -> Result<SteadyStateDistribution, MarkovError> {
    if q.dim() == 0 {
        return Err(MarkovError::EmptyStateSpace);
    }
    if !is_irreducible(q) {
        return Err(MarkovError::ReducibleChain);
    }
    let dense = match options.method {
        SolveMethod::Dense => true,
        SolveMethod::Power => false,
        SolveMethod::Auto => q.dim() <= options.dense_limit,
    };
    let (raw, iterations) = if dense {
        (solve_dense(q)?, 0)
    } else {
        power_iteration(q, options)?
    };
    let probabilities = clamp_and_normalize(raw)?;
    let residual = residual_inf(q, &probabilities);
    if residual > RESIDUAL_TOLERANCE {
        return Err(MarkovError::NotConverged {
            iterations,
            residual,
        });
    }
    let truncation_mass_bound = q.frontier().iter().map(|&i| probabilities[i]).sum();
    Ok(SteadyStateDistribution {
        probabilities,
        truncation_mass_bound,
        residual,
        iterations,
    })
}

pub fn residual_inf(q: &RateMatrix, p: &[f64]) -> f64 {
    q.apply(p).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn clamp_and_normalize(mut p: Vec<f64>) -> Result<Vec<f64>, MarkovError> {
    for v in &mut p {
        if *v < 0.0 {
            if *v < -CLAMP_THRESHOLD {
                return Err(MarkovError::NegativeProbability(*v));
            }
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(MarkovError::ReducibleChain);
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

// Replaces the last balance equation with the normalisation row and solves
// the square system by LU.
fn solve_dense(q: &RateMatrix) -> Result<Vec<f64>, MarkovError> {
    let n = q.dim();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (row, col, v) in q.entries() {
        a[(row, col)] = v;
    }
    for col in 0..n {
        a[(n - 1, col)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(MarkovError::ReducibleChain)?;
    Ok(x.iter().copied().collect())
}

// Iterates P <- P + Q P / L with L slightly above the largest exit rate so
// that every state keeps a self-loop and the uniformised chain is aperiodic.
fn power_iteration(
    q: &RateMatrix,
    options: &SolverOptions,
) -> Result<(Vec<f64>, usize), MarkovError> {
    const CHECK_EVERY: usize = 32;
    let n = q.dim();
    let scale = 1.0 / (1.05 * q.max_exit_rate());
    let mut p = match &options.initial {
        Some(init) if init.len() == n => {
            let total: f64 = init.iter().map(|v| v.max(0.0)).sum();
            init.iter().map(|v| v.max(0.0) / total).collect()
        }
        _ => vec![1.0 / n as f64; n],
    };
    let mut qp = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iter = 0;
    while iter < options.max_iterations {
        q.apply_into(&p, &mut qp);
        if iter % CHECK_EVERY == 0 {
            let total: f64 = p.iter().sum();
            residual = qp.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / total;
            if residual <= options.target_residual {
                return Ok((p, iter));
            }
            if !residual.is_finite() {
                break;
            }
        }
        for (pi, dq) in p.iter_mut().zip(&qp) {
            *pi += scale * dq;
        }
        iter += 1;
    }
    if residual <= RESIDUAL_TOLERANCE {
        return Ok((p, iter));
    }
    Err(MarkovError::NotConverged {
        iterations: iter,
        residual,
    })
}

// Strong connectivity of the jump graph: every state reachable from state 0
// and state 0 reachable from every state.
fn is_irreducible(q: &RateMatrix) -> bool {
    let n = q.dim();
    let mut forward = vec![Vec::new(); n];
    let mut backward = vec![Vec::new(); n];
    for (row, col, v) in q.entries() {
        if row != col && v > 0.0 {
            forward[col].push(row);
            backward[row].push(col);
        }
    }
    let reach_all = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    };
    reach_all(&forward) && reach_all(&backward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ChainConfig;
    use crate::markov::{build_generator, enumerate_states, State};

    fn birth_death(lambda: f64, mu: f64, n: usize) -> RateMatrix {
        let outflows = (0..n).map(|i| {
            let mut v = Vec::new();
            if i + 1 < n {
                v.push((i + 1, lambda));
            }
            if i > 0 {
                v.push((i - 1, mu));
            }
            v
        });
        RateMatrix::from_outflows(n, outflows.collect::<Vec<_>>())
    }

    #[test]
    fn truncated_geometric_both_methods() {
        let q = birth_death(0.6, 1.0, 60);
        let norm: f64 = (0..60).map(|i| 0.6f64.powi(i)).sum();
        for method in [SolveMethod::Dense, SolveMethod::Power] {
            let opts = SolverOptions {
                method,
                ..Default::default()
            };
            let sol = solve_steady_state_with(&q, &opts).unwrap();
            for (i, p) in sol.probabilities.iter().enumerate() {
                let exact = 0.6f64.powi(i as i32) / norm;
                assert!(
                    (p - exact).abs() < 1e-10,
                    "{method:?} state {i}: {p} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn vanishing_load_concentrates_on_empty_state() {
        let cfg = ChainConfig {
            arrival_rate: 1e-9,
            ..ChainConfig::default()
        };
        let space = enumerate_states(8, 8).unwrap();
        let sol = solve_steady_state(&build_generator(&cfg, &space)).unwrap();
        let origin = space.index_of(State::new(0, 0)).unwrap();
        assert!(sol.probabilities[origin] > 1.0 - 1e-6);
        for (idx, p) in sol.probabilities.iter().enumerate() {
            if idx != origin {
                assert!(*p < 1e-6);
            }
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        // two absorbing-ish classes: 0 <-> 1, 2 <-> 3
        let outflows = vec![
            vec![(1, 1.0)],
            vec![(0, 1.0)],
            vec![(3, 1.0)],
            vec![(2, 1.0)],
        ];
        let q = RateMatrix::from_outflows(4, outflows);
        assert_eq!(
            solve_steady_state(&q).unwrap_err(),
            MarkovError::ReducibleChain
        );
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let q = birth_death(0.9, 1.0, 200);
        let opts = SolverOptions {
            method: SolveMethod::Power,
            max_iterations: 10,
            ..Default::default()
        };
        assert!(matches!(
            solve_steady_state_with(&q, &opts),
            Err(MarkovError::NotConverged { .. })
        ));
    }

    #[test]
    fn warm_start_needs_fewer_iterations() {
        let q = birth_death(0.8, 1.0, 120);
        let opts = SolverOptions {
            method: SolveMethod::Power,
            ..Default::default()
        };
        let cold = solve_steady_state_with(&q, &opts).unwrap();
        let warm = solve_steady_state_with(
            &q,
            &SolverOptions {
                initial: Some(cold.probabilities.clone()),
                ..opts
            },
        )
        .unwrap();
        assert!(warm.iterations < cold.iterations);
    }

    #[test]
    fn normalised_with_frontier_mass() {
        let cfg = ChainConfig::default();
        let space = enumerate_states(12, 20).unwrap();
        let sol = solve_steady_state(&build_generator(&cfg, &space)).unwrap();
        assert!((sol.total() - 1.0).abs() <= 1e-10);
        let frontier: f64 = space
            .states()
            .iter()
            .zip(&sol.probabilities)
            .filter(|(s, _)| space.is_frontier(**s))
            .map(|(_, p)| p)
            .sum();
        assert!((sol.truncation_mass_bound - frontier).abs() < 1e-15);
        assert!(sol.residual <= RESIDUAL_TOLERANCE);
    }
}
