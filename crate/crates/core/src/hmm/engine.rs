//! Log-space forward filtering, backward smoothing and backward path
//! sampling for upper-triangular (monotone) chains.
//!
//! Every per-observation vector is stored as a window `[lo, hi)` of states
//! with finite log mass. Because the chain never moves down, the window can
//! only grow by `max_jump` per step, so a pass over `n` observations costs
//! `O(sum of window widths * bandwidth)` and never touches a dense matrix.

use log::warn;
use rand::Rng;

use super::emission::EmissionMatrix;
use super::transition::Transitions;
use crate::error::{Error, Result};
use crate::math::{log_add, logsumexp, sample_log_categorical, NEG_INF};

/// Log values over the contiguous state range `[lo, lo + vals.len())`;
/// everything outside is `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWindow {
    pub lo: usize,
    pub vals: Vec<f64>,
}

impl LogWindow {
    #[inline]
    pub fn hi(&self) -> usize {
        self.lo + self.vals.len()
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        if k >= self.lo && k < self.hi() {
            self.vals[k - self.lo]
        } else {
            NEG_INF
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.lo..self.hi()
    }

    /// Drop `-inf` entries at both ends; `None` if nothing finite remains.
    fn trimmed(lo: usize, vals: Vec<f64>) -> Option<Self> {
        let first = vals.iter().position(|&v| v != NEG_INF)?;
        let last = vals.iter().rposition(|&v| v != NEG_INF)?;
        Some(Self {
            lo: lo + first,
            vals: vals[first..=last].to_vec(),
        })
    }
}

/// Result of the forward recursion.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    alphas: Vec<LogWindow>,
    loglik: f64,
    infeasible_at: Option<usize>,
}

/// Checks that `log_init` has one entry per state and is normalized.
pub fn validate_log_init(log_init: &[f64], n_states: usize) -> Result<()> {
    if log_init.len() != n_states {
        return Err(Error::Input(format!(
            "initial distribution has {} entries, expected {n_states}",
            log_init.len()
        )));
    }
    let total = logsumexp(log_init);
    if (total.abs() > 1e-9) || total.is_nan() {
        return Err(Error::Input(format!(
            "initial distribution is not normalized (log total = {total})"
        )));
    }
    Ok(())
}

impl ForwardPass {
    /// Runs `alpha_i(l) = logsumexp_j [alpha_{i-1}(l - j) + log T(l - j, l)] + log w_i(l)`.
    pub fn run<T: Transitions>(
        emissions: &EmissionMatrix,
        trans: &T,
        log_init: &[f64],
    ) -> Result<Self> {
        let n = emissions.n_rows();
        let k_total = trans.n_states();
        if n == 0 {
            return Err(Error::Input("no observations".into()));
        }
        if emissions.n_states() != k_total {
            return Err(Error::Input(format!(
                "emissions cover {} states but transitions cover {k_total}",
                emissions.n_states()
            )));
        }
        validate_log_init(log_init, k_total)?;

        let mut alphas = Vec::with_capacity(n);
        let init = LogWindow::trimmed(0, log_init.to_vec())
            .expect("normalized initial distribution has finite mass");
        let first: Vec<f64> = init
            .range()
            .map(|k| init.get(k) + emissions.get(0, k))
            .collect();
        let Some(w) = LogWindow::trimmed(init.lo, first) else {
            return Ok(Self::infeasible(alphas, 0));
        };
        alphas.push(w);

        for i in 1..n {
            let prev = &alphas[i - 1];
            let jump = trans.max_jump(i);
            let lo = prev.lo;
            let hi = (prev.hi() + jump).min(k_total);
            let mut vals = Vec::with_capacity(hi - lo);
            for l in lo..hi {
                let em = emissions.get(i, l);
                if em == NEG_INF {
                    vals.push(NEG_INF);
                    continue;
                }
                let mut acc = NEG_INF;
                let j_max = jump.min(l - lo);
                for j in 0..=j_max {
                    let k = l - j;
                    if k >= prev.hi() {
                        continue;
                    }
                    let a = prev.vals[k - lo];
                    if a == NEG_INF {
                        continue;
                    }
                    let t = trans.log_prob(i, k, j);
                    if t == NEG_INF {
                        continue;
                    }
                    acc = log_add(acc, a + t);
                }
                vals.push(if acc == NEG_INF { NEG_INF } else { acc + em });
            }
            match LogWindow::trimmed(lo, vals) {
                Some(w) => alphas.push(w),
                None => return Ok(Self::infeasible(alphas, i)),
            }
        }

        let loglik = logsumexp(&alphas[n - 1].vals);
        Ok(Self {
            alphas,
            loglik,
            infeasible_at: None,
        })
    }

    fn infeasible(alphas: Vec<LogWindow>, at: usize) -> Self {
        warn!("data impossible under the model: no reachable state at observation {at}");
        Self {
            alphas,
            loglik: NEG_INF,
            infeasible_at: Some(at),
        }
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn is_feasible(&self) -> bool {
        self.infeasible_at.is_none()
    }

    /// Observation index at which the filter lost all mass, if any.
    pub fn infeasible_at(&self) -> Option<usize> {
        self.infeasible_at
    }

    pub fn alphas(&self) -> &[LogWindow] {
        &self.alphas
    }

    fn require_feasible(&self) -> Result<()> {
        match self.infeasible_at {
            None => Ok(()),
            Some(i) => Err(Error::Infeasible(format!(
                "no state sequence is consistent with the data (all mass lost at observation {i})"
            ))),
        }
    }

    /// Normalized filtered distribution at the last observation.
    pub fn final_filtered(&self) -> Result<LogWindow> {
        self.require_feasible()?;
        let last = self.alphas.last().expect("non-empty");
        Ok(LogWindow {
            lo: last.lo,
            vals: last.vals.iter().map(|v| v - self.loglik).collect(),
        })
    }

    /// Draws one state path from the exact joint posterior by backward
    /// sampling. With `next_state = Some(s)`, the path is additionally
    /// conditioned on the chain being in state `s` one step after the last
    /// observation (transition `trans.log_prob(n, k, s - k)`).
    pub fn sample_path<T: Transitions, R: Rng + ?Sized>(
        &self,
        trans: &T,
        next_state: Option<usize>,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        self.require_feasible()?;
        let n = self.alphas.len();
        let mut path = vec![0usize; n];

        let last = &self.alphas[n - 1];
        let mut state = match next_state {
            None => sample_log_categorical(rng, &last.vals).map(|j| last.lo + j),
            Some(s) => self.sample_predecessor(trans, n, n - 1, s, rng),
        }
        .ok_or_else(|| Error::Infeasible("conditioning state unreachable".into()))?;
        path[n - 1] = state;

        for i in (1..n).rev() {
            state = self
                .sample_predecessor(trans, i, i - 1, state, rng)
                .ok_or_else(|| Error::Infeasible(format!("no predecessor at observation {i}")))?;
            path[i - 1] = state;
        }
        Ok(path)
    }

    /// Samples `k` proportional to `alpha_at(k) * T_step(k, next)`.
    fn sample_predecessor<T: Transitions, R: Rng + ?Sized>(
        &self,
        trans: &T,
        step: usize,
        at: usize,
        next: usize,
        rng: &mut R,
    ) -> Option<usize> {
        let a = &self.alphas[at];
        let jump = trans.max_jump(step);
        let lo = next.saturating_sub(jump).max(a.lo);
        let hi = (next + 1).min(a.hi());
        if lo >= hi {
            return None;
        }
        let logw: Vec<f64> = (lo..hi)
            .map(|k| {
                let t = trans.log_prob(step, k, next - k);
                if t == NEG_INF {
                    NEG_INF
                } else {
                    a.get(k) + t
                }
            })
            .collect();
        sample_log_categorical(rng, &logw).map(|j| lo + j)
    }

    pub fn sample_paths<T: Transitions, R: Rng + ?Sized>(
        &self,
        trans: &T,
        n_paths: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<usize>>> {
        (0..n_paths)
            .map(|_| self.sample_path(trans, None, rng))
            .collect()
    }
}

/// Log marginal likelihood with hidden states summed out. Returns `-inf`
/// (after logging a diagnostic) when the data are impossible under the model.
pub fn forward_loglik<T: Transitions>(
    emissions: &EmissionMatrix,
    trans: &T,
    log_init: &[f64],
) -> Result<f64> {
    Ok(ForwardPass::run(emissions, trans, log_init)?.loglik())
}

/// Smoothed marginals `P(state_i = k | all data)` stored on the forward windows.
#[derive(Debug, Clone)]
pub struct Posterior {
    forward: ForwardPass,
    betas: Vec<LogWindow>,
    gamma: Vec<LogWindow>,
}

impl Posterior {
    pub fn run<T: Transitions>(
        emissions: &EmissionMatrix,
        trans: &T,
        log_init: &[f64],
    ) -> Result<Self> {
        let forward = ForwardPass::run(emissions, trans, log_init)?;
        Self::from_forward(forward, emissions, trans)
    }

    pub fn from_forward<T: Transitions>(
        forward: ForwardPass,
        emissions: &EmissionMatrix,
        trans: &T,
    ) -> Result<Self> {
        forward.require_feasible()?;
        let alphas = &forward.alphas;
        let n = alphas.len();
        let mut betas: Vec<LogWindow> = Vec::with_capacity(n);
        betas.push(LogWindow {
            lo: alphas[n - 1].lo,
            vals: vec![0.0; alphas[n - 1].vals.len()],
        });
        for i in (1..n).rev() {
            let next = betas.last().expect("pushed above");
            let cur = &alphas[i - 1];
            let jump = trans.max_jump(i);
            // Combine emission and beta once per destination state.
            let eb: Vec<f64> = next
                .range()
                .map(|l| {
                    let b = next.get(l);
                    if b == NEG_INF {
                        NEG_INF
                    } else {
                        emissions.get(i, l) + b
                    }
                })
                .collect();
            let vals: Vec<f64> = cur
                .range()
                .map(|k| {
                    let mut acc = NEG_INF;
                    let l_lo = k.max(next.lo);
                    let l_hi = (k + jump + 1).min(next.hi());
                    for l in l_lo..l_hi {
                        let e = eb[l - next.lo];
                        if e == NEG_INF {
                            continue;
                        }
                        let t = trans.log_prob(i, k, l - k);
                        if t == NEG_INF {
                            continue;
                        }
                        acc = log_add(acc, t + e);
                    }
                    acc
                })
                .collect();
            betas.push(LogWindow { lo: cur.lo, vals });
        }
        betas.reverse();

        let loglik = forward.loglik;
        let gamma = alphas
            .iter()
            .zip(&betas)
            .map(|(a, b)| LogWindow {
                lo: a.lo,
                vals: a
                    .vals
                    .iter()
                    .zip(&b.vals)
                    .map(|(&x, &y)| {
                        if x == NEG_INF || y == NEG_INF {
                            0.0
                        } else {
                            (x + y - loglik).exp()
                        }
                    })
                    .collect(),
            })
            .collect();

        Ok(Self {
            forward,
            betas,
            gamma,
        })
    }

    pub fn loglik(&self) -> f64 {
        self.forward.loglik
    }

    pub fn forward(&self) -> &ForwardPass {
        &self.forward
    }

    pub fn betas(&self) -> &[LogWindow] {
        &self.betas
    }

    pub fn n_obs(&self) -> usize {
        self.gamma.len()
    }

    /// Smoothed probabilities for observation `i` as a window (`vals` are
    /// probabilities here, not logs).
    pub fn gamma_row(&self, i: usize) -> &LogWindow {
        &self.gamma[i]
    }

    #[inline]
    pub fn gamma(&self, i: usize, k: usize) -> f64 {
        let w = &self.gamma[i];
        if k >= w.lo && k < w.hi() {
            w.vals[k - w.lo]
        } else {
            0.0
        }
    }

    /// Largest smoothed mass placed on state `k` over all observations.
    pub fn max_mass_on(&self, k: usize) -> f64 {
        (0..self.n_obs())
            .map(|i| self.gamma(i, k))
            .fold(0.0, f64::max)
    }

    /// Visits every feasible transition with
    /// `log_w = alpha_{i-1}(k) + log w_i(l) + beta_i(l) - loglik`, so that the
    /// pairwise posterior is `exp(log_w + log T_i(k, l))`.
    pub fn for_each_pair<T: Transitions, F: FnMut(usize, usize, usize, f64)>(
        &self,
        emissions: &EmissionMatrix,
        trans: &T,
        mut f: F,
    ) {
        let alphas = &self.forward.alphas;
        let loglik = self.forward.loglik;
        for i in 1..alphas.len() {
            let prev = &alphas[i - 1];
            let next = &self.betas[i];
            let jump = trans.max_jump(i);
            for k in prev.range() {
                let a = prev.get(k);
                if a == NEG_INF {
                    continue;
                }
                let l_lo = k.max(next.lo);
                let l_hi = (k + jump + 1).min(next.hi());
                for l in l_lo..l_hi {
                    let b = next.get(l);
                    if b == NEG_INF {
                        continue;
                    }
                    let e = emissions.get(i, l);
                    if e == NEG_INF {
                        continue;
                    }
                    f(i, k, l - k, a + e + b - loglik);
                }
            }
        }
    }

    /// Exact joint posterior `P(state_i = k, state_j = l | data)` for `i < j`,
    /// as `(k, l, prob)` triples with positive mass.
    pub fn joint_endpoints<T: Transitions>(
        &self,
        emissions: &EmissionMatrix,
        trans: &T,
        i: usize,
        j: usize,
    ) -> Result<Vec<(usize, usize, f64)>> {
        let n = self.n_obs();
        if i >= j || j >= n {
            return Err(Error::Input(format!(
                "joint endpoints need i < j < {n} (got i={i}, j={j})"
            )));
        }
        let k_total = trans.n_states();
        let alpha_i = &self.forward.alphas[i];
        let beta_j = &self.betas[j];
        let loglik = self.forward.loglik;
        let mut out = Vec::new();
        for k in alpha_i.range() {
            let a = alpha_i.get(k);
            if a == NEG_INF || self.gamma(i, k) == 0.0 {
                continue;
            }
            // Propagate a point mass at k through observations i+1..=j.
            let mut cur = LogWindow {
                lo: k,
                vals: vec![0.0],
            };
            for step in i + 1..=j {
                let jump = trans.max_jump(step);
                let lo = cur.lo;
                let hi = (cur.hi() + jump).min(k_total);
                let vals: Vec<f64> = (lo..hi)
                    .map(|l| {
                        let em = emissions.get(step, l);
                        if em == NEG_INF {
                            return NEG_INF;
                        }
                        let mut acc = NEG_INF;
                        for jj in 0..=jump.min(l - lo) {
                            let from = l - jj;
                            let v = cur.get(from);
                            if v == NEG_INF {
                                continue;
                            }
                            let t = trans.log_prob(step, from, jj);
                            if t != NEG_INF {
                                acc = log_add(acc, v + t);
                            }
                        }
                        if acc == NEG_INF {
                            NEG_INF
                        } else {
                            acc + em
                        }
                    })
                    .collect();
                match LogWindow::trimmed(lo, vals) {
                    Some(w) => cur = w,
                    None => {
                        cur = LogWindow { lo, vals: vec![] };
                        break;
                    }
                }
            }
            for l in cur.range() {
                let v = cur.get(l);
                let b = beta_j.get(l);
                if v == NEG_INF || b == NEG_INF {
                    continue;
                }
                let p = (a + v + b - loglik).exp();
                if p > 0.0 {
                    out.push((k, l, p));
                }
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper: smoothed marginals plus the log-likelihood.
pub fn forward_backward<T: Transitions>(
    emissions: &EmissionMatrix,
    trans: &T,
    log_init: &[f64],
) -> Result<Posterior> {
    Posterior::run(emissions, trans, log_init)
}
