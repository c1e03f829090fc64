use crate::config::ChainConfig;

use super::state::{State, StateSpace};

/// Sparse CTMC generator in the orientation `Q P = 0`: entry `(to, from)` is
/// the rate of the jump `from -> to`, the diagonal holds minus the total
/// outflow, so every column sums to zero.
///
/// Stored column-compressed; each column lists the diagonal first.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    // states on the truncation boundary; empty when unknown
    frontier: Vec<usize>,
}

impl RateMatrix {
    /// Assembles a generator from per-source outflow lists. Rates into the
    /// source itself or non-positive rates are ignored; duplicate targets are
    /// merged.
    pub fn from_outflows<I>(dim: usize, outflows: I) -> Self
    where
        I: IntoIterator<Item = Vec<(usize, f64)>>,
    {
        let mut col_ptr = Vec::with_capacity(dim + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        let mut count = 0;
        for (from, mut jumps) in outflows.into_iter().enumerate() {
            jumps.retain(|&(to, rate)| to != from && rate > 0.0);
            jumps.sort_by_key(|&(to, _)| to);
            let diag_pos = row_idx.len();
            row_idx.push(from);
            values.push(0.0);
            let mut total = 0.0;
            for (to, rate) in jumps {
                assert!(to < dim, "transition target {to} out of range");
                total += rate;
                if row_idx.len() > diag_pos + 1 && *row_idx.last().unwrap() == to {
                    *values.last_mut().unwrap() += rate;
                } else {
                    row_idx.push(to);
                    values.push(rate);
                }
            }
            values[diag_pos] = -total;
            col_ptr.push(row_idx.len());
            count += 1;
        }
        assert_eq!(count, dim, "expected one outflow list per state");
        Self {
            dim,
            col_ptr,
            row_idx,
            values,
            frontier: Vec::new(),
        }
    }

    /// Marks states whose probability mass measures truncation error.
    pub fn with_frontier(mut self, frontier: Vec<usize>) -> Self {
        self.frontier = frontier;
        self
    }

    pub fn frontier(&self) -> &[usize] {
        &self.frontier
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzero entries as `(row, col, rate)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |col| {
            (self.col_ptr[col]..self.col_ptr[col + 1])
                .map(move |k| (self.row_idx[k], col, self.values[k]))
        })
    }

    /// Entries of one column (outflows of one state), diagonal first.
    pub fn column(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.col_ptr[col]..self.col_ptr[col + 1]).map(move |k| (self.row_idx[k], self.values[k]))
    }

    pub fn diagonal(&self, col: usize) -> f64 {
        self.values[self.col_ptr[col]]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.column(col)
            .find(|&(r, _)| r == row)
            .map_or(0.0, |(_, v)| v)
    }

    /// `Q x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (col, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for k in self.col_ptr[col]..self.col_ptr[col + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|c| self.column(c).map(|(_, v)| v).sum())
            .collect()
    }

    /// Largest total outflow rate of any state.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim).map(|c| -self.diagonal(c)).fold(0.0, f64::max)
    }
}

/// Builds the generator of the pending/confirmed two-queue chain on `space`.
///
/// From `E(i, j)`:
/// * arrival to `E(i+1, j)` at `R_a`,
/// * mining to `E(i - min(i,k), j + min(i,k))` at `R_m` when `i >= 1`,
/// * service to `E(i, j-1)` at `min(j, s) R_s`,
/// * rejection to `E(i - min(i,r), j)` at `R_r` when `i >= 1`.
///
/// Jumps that would leave the box are dropped and do not count towards the
/// diagonal, so the truncated matrix stays a proper generator.
pub fn build_generator(config: &ChainConfig, space: &StateSpace) -> RateMatrix {
    let k = config.block_capacity;
    let r = config.rejection_batch;
    let s = config.servers;
    let outflows = space.states().iter().map(|&state| {
        let State {
            pending: i,
            confirmed: j,
        } = state;
        let mut jumps = Vec::with_capacity(4);
        let mut push = |target: State, rate: f64| {
            if rate > 0.0 {
                if let Some(to) = space.index_of(target) {
                    jumps.push((to, rate));
                }
            }
        };
        push(State::new(i + 1, j), config.arrival_rate);
        if i >= 1 {
            let mined = i.min(k);
            push(State::new(i - mined, j + mined), config.mining_rate);
            push(State::new(i - i.min(r), j), config.rejection_rate);
        }
        if j >= 1 {
            push(
                State::new(i, j - 1),
                f64::from(j.min(s)) * config.service_rate,
            );
        }
        jumps
    });
    let frontier = (0..space.len())
        .filter(|&idx| space.is_frontier(space.state(idx)))
        .collect();
    RateMatrix::from_outflows(space.len(), outflows.collect::<Vec<_>>()).with_frontier(frontier)
}
