//! Truncated two-dimensional CTMC of a single chain.
//!
//! The state `E(i, j)` counts requests waiting for block inclusion (`i`) and
//! requests confirmed and waiting for an access link (`j`). The solver
//! enumerates a finite box of states, builds the sparse generator, solves for
//! the stationary vector and turns the mean occupancy into latency through
//! Little's law:
//!
//! ```text
//! L(N) = (1/R_a) * sum (i + j) P(i, j) + (N - 1)/R_m - 1/R_s
//! ```

mod generator;
mod solver;
mod state;

use thiserror::Error;

use crate::config::{ChainConfig, ConfigError};

pub use generator::{build_generator, RateMatrix};
pub use solver::{
    residual_inf, solve_steady_state, solve_steady_state_with, SolveMethod, SolverOptions,
    SteadyStateDistribution, CLAMP_THRESHOLD, RESIDUAL_TOLERANCE,
};
pub use state::{enumerate_states, State, StateSpace, DEFAULT_MAX_STATES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("state space {i_max}x{j_max} exceeds the cap of {max_states} states")]
    StateSpaceTooLarge {
        i_max: u32,
        j_max: u32,
        max_states: usize,
    },
    #[error("empty state space")]
    EmptyStateSpace,
    #[error("chain is reducible; no unique stationary vector")]
    ReducibleChain,
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("stationary vector has a negative entry {0:e}")]
    NegativeProbability(f64),
    #[error(
        "truncation did not converge before the state cap; last box {i_max}x{j_max}, \
         frontier mass {frontier_mass:e}"
    )]
    TruncationCapExceeded {
        i_max: u32,
        j_max: u32,
        frontier_mass: f64,
    },
}

/// `sum (i + j) P(i, j)`.
pub fn mean_queue_length(p: &SteadyStateDistribution, space: &StateSpace) -> f64 {
    space
        .states()
        .iter()
        .zip(&p.probabilities)
        .map(|(s, prob)| f64::from(s.pending + s.confirmed) * prob)
        .sum()
}

#[derive(Debug, Clone)]
pub struct TruncationOptions {
    /// Frontier mass the accepted box must stay under.
    pub tol: f64,
    /// Relative change of the mean occupancy between successive boxes.
    pub mean_rel_change: f64,
    pub initial_bound: u32,
    pub max_states: usize,
    pub solver: SolverOptions,
}

impl Default for TruncationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            mean_rel_change: 1e-3,
            initial_bound: 16,
            max_states: DEFAULT_MAX_STATES,
            solver: SolverOptions::default(),
        }
    }
}

/// A solved truncation.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub space: StateSpace,
    pub distribution: SteadyStateDistribution,
    pub mean_queue_length: f64,
}

/// Picks a box large enough for `config` with the default options.
pub fn auto_truncate(config: &ChainConfig, tol: f64) -> Result<StateSpace, MarkovError> {
    let opts = TruncationOptions {
        tol,
        ..Default::default()
    };
    Ok(auto_truncate_with(config, &opts)?.space)
}

/// Doubles both bounds, starting from `initial_bound`, until the frontier mass
/// is under `tol` and the mean occupancy moved less than `mean_rel_change`
/// since the previous box. The first box is accepted on the frontier test
/// alone. Each larger solve is warm-started from the previous solution.
pub fn auto_truncate_with(
    config: &ChainConfig,
    opts: &TruncationOptions,
) -> Result<Truncation, MarkovError> {
    let mut bound = opts.initial_bound.max(1);
    let mut previous: Option<Truncation> = None;
    loop {
        let space = match StateSpace::with_limit(bound, bound, opts.max_states) {
            Ok(space) => space,
            Err(MarkovError::StateSpaceTooLarge { .. }) => {
                let (i_max, j_max, frontier_mass) = previous
                    .as_ref()
                    .map(|t| {
                        (
                            t.space.i_max(),
                            t.space.j_max(),
                            t.distribution.truncation_mass_bound,
                        )
                    })
                    .unwrap_or((0, 0, f64::NAN));
                return Err(MarkovError::TruncationCapExceeded {
                    i_max,
                    j_max,
                    frontier_mass,
                });
            }
            Err(e) => return Err(e),
        };
        let q = build_generator(config, &space);
        let mut solver = opts.solver.clone();
        if let Some(prev) = &previous {
            solver.initial = Some(embed(prev, &space));
        }
        let distribution = solve_steady_state_with(&q, &solver)?;
        let mean = mean_queue_length(&distribution, &space);
        let frontier_ok = distribution.truncation_mass_bound < opts.tol;
        let mean_ok = previous.as_ref().is_none_or(|prev| {
            (mean - prev.mean_queue_length).abs() <= opts.mean_rel_change * mean.abs()
        });
        let current = Truncation {
            space,
            distribution,
            mean_queue_length: mean,
        };
        if frontier_ok && mean_ok {
            return Ok(current);
        }
        previous = Some(current);
        bound = bound.saturating_mul(2);
    }
}

fn embed(prev: &Truncation, space: &StateSpace) -> Vec<f64> {
    let mut init = vec![0.0; space.len()];
    for (s, p) in prev
        .space
        .states()
        .iter()
        .zip(&prev.distribution.probabilities)
    {
        if let Some(idx) = space.index_of(*s) {
            init[idx] = *p;
        }
    }
    init
}

/// Latency estimate from the stationary distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    /// `T_a E[i + j] + T_m (N - 1) - T_s`.
    pub latency: f64,
    /// The one-confirmation latency `T_a E[i + j] - T_s`.
    pub base_latency: f64,
    pub mean_queue_length: f64,
    pub i_max: u32,
    pub j_max: u32,
    pub truncation_mass: f64,
}

impl LatencyReport {
    /// The same solve re-evaluated for another confirmation depth.
    pub fn with_confirmations(&self, confirmations: u32, mining_rate: f64) -> Self {
        Self {
            latency: confirmation_latency(self.base_latency, confirmations, mining_rate),
            ..*self
        }
    }
}

fn confirmation_latency(base: f64, confirmations: u32, mining_rate: f64) -> f64 {
    base + f64::from(confirmations.saturating_sub(1)) / mining_rate
}

/// Average latency of `config` with the default truncation options.
pub fn latency(config: &ChainConfig) -> Result<f64, MarkovError> {
    Ok(latency_report(config, &TruncationOptions::default())?.latency)
}

pub fn latency_report(
    config: &ChainConfig,
    opts: &TruncationOptions,
) -> Result<LatencyReport, MarkovError> {
    config.validate()?;
    let t = auto_truncate_with(config, opts)?;
    let base_latency = t.mean_queue_length / config.arrival_rate - 1.0 / config.service_rate;
    Ok(LatencyReport {
        latency: confirmation_latency(base_latency, config.confirmations, config.mining_rate),
        base_latency,
        mean_queue_length: t.mean_queue_length,
        i_max: t.space.i_max(),
        j_max: t.space.j_max(),
        truncation_mass: t.distribution.truncation_mass_bound,
    })
}
