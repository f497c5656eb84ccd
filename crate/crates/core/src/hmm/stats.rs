//! Posterior expected counts used for exact log-likelihood gradients
//! (Fisher's identity: the score equals the posterior expectation of the
//! complete-data score).

use std::f64::consts::TAU;

use super::emission::EmissionMatrix;
use super::engine::Posterior;
use super::space::StateSpace;
use super::transition::Transitions;

/// Expected counts from one smoothing pass.
#[derive(Debug, Clone)]
pub struct ExpectedCounts {
    /// `phase_gamma[i][j]`: posterior mass of row `i` on states with phase `j`.
    pub phase_gamma: Vec<Vec<f64>>,
    /// Expected number of stay transitions out of each state.
    pub stay: Vec<f64>,
    /// Expected number of advance transitions out of each state.
    pub advance: Vec<f64>,
}

impl ExpectedCounts {
    /// Collects counts for a bidiagonal chain (jumps 0 or 1).
    pub fn collect<T: Transitions>(
        post: &Posterior,
        emissions: &EmissionMatrix,
        trans: &T,
        space: &StateSpace,
    ) -> Self {
        let n_s = space.n_s();
        let k_total = space.total_states();
        let phase_gamma = (0..post.n_obs())
            .map(|i| {
                let mut g = vec![0.0; n_s];
                let w = post.gamma_row(i);
                for k in w.range() {
                    g[space.phase(k)] += w.vals[k - w.lo];
                }
                g
            })
            .collect();
        let mut stay = vec![0.0; k_total];
        let mut advance = vec![0.0; k_total];
        post.for_each_pair(emissions, trans, |step, k, jump, log_w| {
            let xi = (log_w + trans.log_prob(step, k, jump)).exp();
            match jump {
                0 => stay[k] += xi,
                1 => advance[k] += xi,
                _ => {}
            }
        });
        Self {
            phase_gamma,
            stay,
            advance,
        }
    }

    /// Gradient of the log-likelihood w.r.t. the per-state stay
    /// probabilities `p_k` (zero for the absorbing final state).
    pub fn stay_gradient(&self, p_state: impl Fn(usize) -> f64) -> Vec<f64> {
        let k_total = self.stay.len();
        (0..k_total)
            .map(|k| {
                if k + 1 == k_total {
                    0.0
                } else {
                    let p = p_state(k);
                    self.stay[k] / p - self.advance[k] / (1.0 - p)
                }
            })
            .collect()
    }
}

/// Derivatives of one proxy row's expected log emission with respect to
/// `(a, b, sigma)`, given the row's posterior mass per phase.
pub fn emission_row_gradient(
    s: f64,
    a: f64,
    b: f64,
    sigma: f64,
    phase_gamma: &[f64],
) -> (f64, f64, f64) {
    let n_s = phase_gamma.len();
    let (mut ga, mut gb, mut gs) = (0.0, 0.0, 0.0);
    let s2 = sigma * sigma;
    for (j, &g) in phase_gamma.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let c = (TAU * j as f64 / n_s as f64).cos();
        let r = s - a * c - b;
        ga += g * r * c / s2;
        gb += g * r / s2;
        gs += g * (r * r / (s2 * sigma) - 1.0 / sigma);
    }
    (ga, gb, gs)
}
