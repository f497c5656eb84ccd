use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice of discrete time states.
///
/// State index `i` (0-based) carries the 1-based label `k = i + 1` and the
/// time value `t = k / n_s` years. The year of a state is `floor(t)` and its
/// phase within the yearly cycle is `k mod n_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    n_s: usize,
    m: usize,
}

impl StateSpace {
    pub fn new(n_s: usize, m: usize) -> Result<Self> {
        if n_s == 0 || m == 0 {
            return Err(Error::Config(format!(
                "state space needs n_s >= 1 and m >= 1 (got n_s={n_s}, m={m})"
            )));
        }
        // Leave headroom for index arithmetic such as `i + jump`.
        match n_s.checked_mul(m) {
            Some(k) if k < usize::MAX / 4 => Ok(Self { n_s, m }),
            _ => Err(Error::Sizing { n_s, m }),
        }
    }

    /// Enough years that `n` observations can never drive the chain into the
    /// absorbing final state: `m = ceil(n / n_s) + margin_years`.
    pub fn for_observations(n: usize, n_s: usize, margin_years: usize) -> Result<Self> {
        if n_s == 0 {
            return Err(Error::Config("n_s must be at least 1".into()));
        }
        let m = n
            .div_ceil(n_s)
            .checked_add(margin_years)
            .ok_or(Error::Sizing { n_s, m: usize::MAX })?;
        Self::new(n_s, m.max(1))
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn total_states(&self) -> usize {
        self.n_s * self.m
    }

    /// Time value of state `i`, in years.
    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.n_s as f64
    }

    #[inline]
    pub fn year(&self, i: usize) -> usize {
        (i + 1) / self.n_s
    }

    #[inline]
    pub fn phase(&self, i: usize) -> usize {
        (i + 1) % self.n_s
    }

    /// Parameter slot of state `i`: `(k - 1) mod n_s`. Per-phase parameters
    /// (stay probabilities, rates, Beta hyperparameters) are indexed by slot,
    /// so slot 0 is the state `k = 1, n_s + 1, ...`.
    #[inline]
    pub fn slot(&self, i: usize) -> usize {
        i % self.n_s
    }

    /// State indices whose year equals `year`.
    pub fn states_in_year(&self, year: usize) -> std::ops::Range<usize> {
        let k = self.total_states();
        // k in [year * n_s, (year + 1) * n_s) with k >= 1, i.e. i = k - 1.
        let lo = (year * self.n_s).max(1) - 1;
        let hi = ((year + 1) * self.n_s - 1).min(k);
        lo.min(hi)..hi
    }

    /// Log initial distribution uniform over the first `n_s` states
    /// (`k = 1..=n_s`), i.e. one full cycle at the top of the core.
    pub fn default_log_init(&self) -> Vec<f64> {
        let k = self.total_states();
        let w = -(self.n_s.min(k) as f64).ln();
        (0..k)
            .map(|i| if i < self.n_s { w } else { f64::NEG_INFINITY })
            .collect()
    }
}
