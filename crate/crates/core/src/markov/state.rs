use super::MarkovError;

/// Default cap on the number of states a truncation may enumerate.
pub const DEFAULT_MAX_STATES: usize = 4_000_000;

/// `E(i, j)`: `pending` requests waiting for a block, `confirmed` requests
/// waiting for (or in) service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub pending: u32,
    pub confirmed: u32,
}

impl State {
    pub const fn new(pending: u32, confirmed: u32) -> Self {
        Self { pending, confirmed }
    }
}

/// The box `0 <= i <= i_max, 0 <= j <= j_max`, ordered by level `i + j` and,
/// within a level, by descending `i`:
/// `(0,0) | (1,0) (0,1) | (2,0) (1,1) (0,2) | ...`
#[derive(Debug, Clone)]
pub struct StateSpace {
    i_max: u32,
    j_max: u32,
    states: Vec<State>,
    // row-major (i, j) -> level-order index
    lookup: Vec<usize>,
}

impl StateSpace {
    pub fn new(i_max: u32, j_max: u32) -> Result<Self, MarkovError> {
        Self::with_limit(i_max, j_max, DEFAULT_MAX_STATES)
    }

    pub fn with_limit(i_max: u32, j_max: u32, max_states: usize) -> Result<Self, MarkovError> {
        let count = (i_max as usize + 1)
            .checked_mul(j_max as usize + 1)
            .filter(|&n| n <= max_states)
            .ok_or(MarkovError::StateSpaceTooLarge {
                i_max,
                j_max,
                max_states,
            })?;
        let width = j_max as usize + 1;
        let mut states = Vec::with_capacity(count);
        let mut lookup = vec![usize::MAX; count];
        for level in 0..=(i_max + j_max) {
            let hi = level.min(i_max);
            let lo = level.saturating_sub(j_max);
            for i in (lo..=hi).rev() {
                let j = level - i;
                lookup[i as usize * width + j as usize] = states.len();
                states.push(State::new(i, j));
            }
        }
        debug_assert_eq!(states.len(), count);
        Ok(Self {
            i_max,
            j_max,
            states,
            lookup,
        })
    }

    pub fn i_max(&self) -> u32 {
        self.i_max
    }

    pub fn j_max(&self) -> u32 {
        self.j_max
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, index: usize) -> State {
        self.states[index]
    }

    pub fn contains(&self, state: State) -> bool {
        state.pending <= self.i_max && state.confirmed <= self.j_max
    }

    pub fn index_of(&self, state: State) -> Option<usize> {
        self.contains(state).then(|| {
            self.lookup
                [state.pending as usize * (self.j_max as usize + 1) + state.confirmed as usize]
        })
    }

    /// Whether `state` touches the truncation boundary.
    pub fn is_frontier(&self, state: State) -> bool {
        state.pending == self.i_max || state.confirmed == self.j_max
    }
}

/// Enumerates the truncated state space in level order.
pub fn enumerate_states(i_max: u32, j_max: u32) -> Result<StateSpace, MarkovError> {
    StateSpace::new(i_max, j_max)
}
