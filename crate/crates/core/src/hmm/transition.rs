use serde::{Deserialize, Serialize};

use super::space::StateSpace;
use crate::error::{Error, Result};
use crate::math::NEG_INF;

/// A (possibly depth-inhomogeneous) upper-triangular transition structure.
///
/// Step `i` moves the chain from the state at observation `i - 1` to the state
/// at observation `i`; from state `k` the chain may only move to `k + jump`
/// with `jump <= max_jump(i)`.
pub trait Transitions {
    fn n_states(&self) -> usize;

    fn max_jump(&self, step: usize) -> usize;

    /// `log P(k -> k + jump)` at `step`; `-inf` when impossible.
    fn log_prob(&self, step: usize, from: usize, jump: usize) -> f64;
}

/// Per-phase probabilities of staying in the current state. Entry `j` applies
/// to every state in parameter slot `j` (see [`StateSpace::slot`]), so the
/// first entry governs the first state of each year as laid out in the
/// transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayProbabilities(Vec<f64>);

impl StayProbabilities {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::param("p", "needs at least one phase"));
        }
        for (j, &pj) in p.iter().enumerate() {
            if !(pj > 0.0 && pj < 1.0) {
                return Err(Error::param(
                    format!("p[{j}]"),
                    format!("stay probability must lie in (0, 1), got {pj}"),
                ));
            }
        }
        Ok(Self(p))
    }

    pub fn uniform(n_s: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; n_s])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The bidiagonal chain: each state either stays or advances by one. The
/// last state is absorbing. Stored as two O(K) vectors, never as a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Bidiagonal {
    log_stay: Vec<f64>,
    log_advance: Vec<f64>,
}

impl Bidiagonal {
    /// Phase-shared stay probabilities tiled over every year.
    pub fn tiled(space: &StateSpace, p: &StayProbabilities) -> Result<Self> {
        if p.len() != space.n_s() {
            return Err(Error::param(
                "p",
                format!("expected {} phases, got {}", space.n_s(), p.len()),
            ));
        }
        let k = space.total_states();
        let per_state: Vec<f64> = (0..k).map(|i| p.0[space.slot(i)]).collect();
        Ok(Self::from_state_probs(&per_state))
    }

    /// One stay probability per state (year-varying). Entries must lie in
    /// (0, 1); the entry of the final state is ignored.
    pub fn yearwise(space: &StateSpace, p: &[f64]) -> Result<Self> {
        if p.len() != space.total_states() {
            return Err(Error::param(
                "p",
                format!("expected {} states, got {}", space.total_states(), p.len()),
            ));
        }
        if let Some(j) = p.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::param(
                format!("p[{j}]"),
                format!("stay probability must lie in (0, 1), got {}", p[j]),
            ));
        }
        Ok(Self::from_state_probs(p))
    }

    /// One stay log-odds per state; stable where `p` rounds to 0 or 1.
    pub fn from_logits(space: &StateSpace, z: &[f64]) -> Result<Self> {
        let k = space.total_states();
        if z.len() != k {
            return Err(Error::param(
                "p",
                format!("expected {k} states, got {}", z.len()),
            ));
        }
        if let Some(j) = z.iter().position(|v| v.is_nan()) {
            return Err(Error::param(format!("p[{j}]"), "log-odds is NaN"));
        }
        let mut log_stay: Vec<f64> = z.iter().map(|&v| -crate::math::softplus(-v)).collect();
        let mut log_advance: Vec<f64> = z.iter().map(|&v| -crate::math::softplus(v)).collect();
        log_stay[k - 1] = 0.0;
        log_advance[k - 1] = NEG_INF;
        Ok(Self {
            log_stay,
            log_advance,
        })
    }

    fn from_state_probs(p: &[f64]) -> Self {
        let k = p.len();
        let mut log_stay: Vec<f64> = p.iter().map(|x| x.ln()).collect();
        let mut log_advance: Vec<f64> = p.iter().map(|x| (-x).ln_1p()).collect();
        log_stay[k - 1] = 0.0;
        log_advance[k - 1] = NEG_INF;
        Self {
            log_stay,
            log_advance,
        }
    }

    /// `(log p_stay(k), log p_advance(k))`.
    #[inline]
    pub fn stay_advance(&self, k: usize) -> (f64, f64) {
        (self.log_stay[k], self.log_advance[k])
    }
}

impl Transitions for Bidiagonal {
    fn n_states(&self) -> usize {
        self.log_stay.len()
    }

    #[inline]
    fn max_jump(&self, _step: usize) -> usize {
        1
    }

    #[inline]
    fn log_prob(&self, _step: usize, from: usize, jump: usize) -> f64 {
        match jump {
            0 => self.log_stay[from],
            1 => self.log_advance[from],
            _ => NEG_INF,
        }
    }
}
