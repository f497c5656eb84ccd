//! Independent reference computations used only by the tests: dense forward
//! recursions, exhaustive path enumeration and a dense matrix exponential.
#![allow(dead_code)]

use icechron::hmm::{EmissionMatrix, Transitions};
use icechron::math::logsumexp;

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// Dense `K x K` log transition matrix at `step`.
pub fn dense_log_matrix<T: Transitions>(trans: &T, step: usize) -> Vec<Vec<f64>> {
    let k = trans.n_states();
    (0..k)
        .map(|from| {
            (0..k)
                .map(|to| {
                    if to < from || to - from > trans.max_jump(step) {
                        NEG_INF
                    } else {
                        trans.log_prob(step, from, to - from)
                    }
                })
                .collect()
        })
        .collect()
}

/// Textbook O(n K^2) forward algorithm over a dense matrix per step.
pub fn dense_forward<T: Transitions>(em: &EmissionMatrix, trans: &T, log_init: &[f64]) -> f64 {
    let k = trans.n_states();
    let mut alpha: Vec<f64> = (0..k).map(|s| log_init[s] + em.get(0, s)).collect();
    for i in 1..em.n_rows() {
        let mat = dense_log_matrix(trans, i);
        alpha = (0..k)
            .map(|to| {
                let terms: Vec<f64> = (0..k).map(|from| alpha[from] + mat[from][to]).collect();
                logsumexp(&terms) + em.get(i, to)
            })
            .collect();
    }
    logsumexp(&alpha)
}

/// Dense forward over explicit per-step probability matrices (`mats[i]`
/// moves observation `i - 1` to `i`; `mats[0]` unused).
pub fn dense_forward_matrices(
    em: &EmissionMatrix,
    mats: &[Vec<Vec<f64>>],
    log_init: &[f64],
) -> f64 {
    let k = log_init.len();
    let mut alpha: Vec<f64> = (0..k).map(|s| log_init[s] + em.get(0, s)).collect();
    for i in 1..em.n_rows() {
        alpha = (0..k)
            .map(|to| {
                let terms: Vec<f64> = (0..k)
                    .map(|from| alpha[from] + mats[i][from][to].ln())
                    .collect();
                logsumexp(&terms) + em.get(i, to)
            })
            .collect();
    }
    logsumexp(&alpha)
}

/// Every state sequence of length `n` over `k` states with its joint log
/// probability (including impossible ones at `-inf`).
pub fn enumerate_paths<T: Transitions>(
    em: &EmissionMatrix,
    trans: &T,
    log_init: &[f64],
) -> Vec<(Vec<usize>, f64)> {
    let n = em.n_rows();
    let k = trans.n_states();
    let total = k.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut path = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            path.push(c % k);
            c /= k;
        }
        let mut lp = log_init[path[0]] + em.get(0, path[0]);
        for i in 1..n {
            let (from, to) = (path[i - 1], path[i]);
            let t = if to < from || to - from > trans.max_jump(i) {
                NEG_INF
            } else {
                trans.log_prob(i, from, to - from)
            };
            lp += t + em.get(i, to);
        }
        if lp.is_nan() {
            lp = NEG_INF;
        }
        out.push((path, lp));
    }
    out
}

pub fn brute_loglik<T: Transitions>(em: &EmissionMatrix, trans: &T, log_init: &[f64]) -> f64 {
    let lps: Vec<f64> = enumerate_paths(em, trans, log_init)
        .into_iter()
        .map(|(_, lp)| lp)
        .collect();
    logsumexp(&lps)
}

/// `gamma[i][k]` by summing path posteriors.
pub fn brute_gamma<T: Transitions>(
    em: &EmissionMatrix,
    trans: &T,
    log_init: &[f64],
) -> Vec<Vec<f64>> {
    let paths = enumerate_paths(em, trans, log_init);
    let ll = logsumexp(&paths.iter().map(|(_, lp)| *lp).collect::<Vec<_>>());
    let n = em.n_rows();
    let k = trans.n_states();
    let mut g = vec![vec![0.0; k]; n];
    for (p, lp) in &paths {
        if *lp == NEG_INF {
            continue;
        }
        let w = (lp - ll).exp();
        for i in 0..n {
            g[i][p[i]] += w;
        }
    }
    g
}

/// Dense matrix exponential by scaling and squaring with a long Taylor
/// series; independent of the banded uniformization code.
pub fn dense_expm(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let norm = a
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let scale = 2f64.powi(s);
    let b: Vec<Vec<f64>> = a
        .iter()
        .map(|r| r.iter().map(|x| x / scale).collect())
        .collect();
    let mut result = identity(n);
    let mut term = identity(n);
    for j in 1..30 {
        term = matmul(&term, &b);
        for r in term.iter_mut() {
            for x in r.iter_mut() {
                *x /= j as f64;
            }
        }
        for (rr, tr) in result.iter_mut().zip(&term) {
            for (x, y) in rr.iter_mut().zip(tr) {
                *x += y;
            }
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (k, &aik) in a[i].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Central finite-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Largest per-component relative error with denominators floored at 1.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Two independent Normal means with a `N(0, 10^2)` prior and 25 noisy
/// observations each; the posterior is Normal in closed form.
pub struct ConjugateToy {
    pub obs: [Vec<f64>; 2],
    pub noise_sd: [f64; 2],
    pub prior_sd: f64,
}

impl ConjugateToy {
    pub fn new() -> Self {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let truth = [3.0, -2.0];
        let noise_sd = [1.0, 2.0];
        let obs = [0, 1].map(|j| {
            let d = Normal::new(truth[j], noise_sd[j]).unwrap();
            (0..25).map(|_| d.sample(&mut rng)).collect()
        });
        Self {
            obs,
            noise_sd,
            prior_sd: 10.0,
        }
    }

    pub fn posterior(&self) -> ([f64; 2], [f64; 2]) {
        let mut mean = [0.0; 2];
        let mut sd = [0.0; 2];
        for j in 0..2 {
            let s2 = self.noise_sd[j] * self.noise_sd[j];
            let prec = 1.0 / (self.prior_sd * self.prior_sd) + self.obs[j].len() as f64 / s2;
            mean[j] = self.obs[j].iter().sum::<f64>() / s2 / prec;
            sd[j] = prec.sqrt().recip();
        }
        (mean, sd)
    }

    /// Log prior plus log likelihood, and its gradient.
    pub fn unnormalized(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut v = 0.0;
        let mut g = vec![0.0; 2];
        for j in 0..2 {
            let s2 = self.noise_sd[j] * self.noise_sd[j];
            let p2 = self.prior_sd * self.prior_sd;
            v -= 0.5 * x[j] * x[j] / p2;
            g[j] -= x[j] / p2;
            for y in &self.obs[j] {
                v -= 0.5 * (y - x[j]) * (y - x[j]) / s2;
                g[j] += (y - x[j]) / s2;
            }
        }
        (v, g)
    }
}

/// The normalized log posterior, so the optimal ELBO is zero.
impl icechron::inference::vi::LogDensity for ConjugateToy {
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (m, s) = self.posterior();
        let mut v = 0.0;
        let mut g = vec![0.0; 2];
        for j in 0..2 {
            let z = (theta[j] - m[j]) / s[j];
            v += -0.5 * z * z - s[j].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            g[j] = -z / s[j];
        }
        (v, g)
    }
}
