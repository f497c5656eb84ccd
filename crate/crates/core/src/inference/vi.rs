//! Mean-field Gaussian variational inference with reparameterized gradients
//! and an adaptive, decaying step size.

use web_time::Instant;

use log::{info, warn};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mle::{fit_mle, initial_params, MleOptions};
use super::transform::{ParamLayout, Transform};
use super::FitReport;
use crate::error::{Error, Result};
use crate::hier::{AbPrior, HierModel, HierObservationParams, YearwiseStayProbabilities};
use crate::hmm::stats::{emission_row_gradient, ExpectedCounts};
use crate::hmm::{Bidiagonal, Chronology, EmissionMatrix, ForwardPass, Posterior};
use crate::math::{
    digamma, half_normal_logpdf, ln_gamma, logistic, logit, rng_stream, softplus, NEG_INF,
};

/// Value substituted for the log density at a sample where it is `-inf`.
pub const INFEASIBLE_CLAMP: f64 = -1e6;

/// Stream offsets keep gradient, monitoring and chronology draws disjoint.
const MONITOR_STREAM: u64 = 1 << 40;
const DRAW_STREAM: u64 = 1 << 41;

/// A differentiable log density over an unconstrained vector.
pub trait LogDensity: Sync {
    /// Value and gradient; `-inf` marks an impossible point.
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>);

    fn value(&self, theta: &[f64]) -> f64 {
        self.eval(theta).0
    }
}

impl<F> LogDensity for F
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self(theta)
    }
}

/// Fully factorized Gaussian over the unconstrained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPosterior {
    pub mu: Vec<f64>,
    pub log_sd: Vec<f64>,
}

impl MeanFieldPosterior {
    pub fn new(mu: Vec<f64>, log_sd: Vec<f64>) -> Result<Self> {
        if mu.len() != log_sd.len() {
            return Err(Error::param("log_sd", "length differs from mu"));
        }
        Ok(Self { mu, log_sd })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sd(&self) -> Vec<f64> {
        self.log_sd.iter().map(|v| v.exp()).collect()
    }

    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        self.log_sd.iter().sum::<f64>() + 0.5 * d * (1.0 + (2.0 * std::f64::consts::PI).ln())
    }

    /// `mu + sd * eps` with `eps` drawn from the given counter stream.
    pub fn draw(&self, seed: u64, stream: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = rng_stream(seed, stream);
        let eps: Vec<f64> = (0..self.dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let theta = self
            .mu
            .iter()
            .zip(&self.log_sd)
            .zip(&eps)
            .map(|((m, s), e)| m + s.exp() * e)
            .collect();
        (theta, eps)
    }
}

/// Monte-Carlo ELBO with its gradient.
#[derive(Debug, Clone)]
pub struct ElboEstimate {
    pub value: f64,
    pub grad_mu: Vec<f64>,
    pub grad_log_sd: Vec<f64>,
    /// Samples at which the target was `-inf` (clamped, zero gradient).
    pub n_infeasible: usize,
}

/// Reparameterized estimate of `E_q[target] + H(q)` from `n_samples` draws
/// on streams `first_stream..first_stream + n_samples`. The entropy enters
/// the gradient through its path derivative at each draw, whose score part
/// has mean zero and is left out.
pub fn elbo_estimate<T: LogDensity + ?Sized>(
    q: &MeanFieldPosterior,
    target: &T,
    n_samples: usize,
    seed: u64,
    first_stream: u64,
) -> ElboEstimate {
    assert!(n_samples >= 1, "at least one gradient sample is required");
    let d = q.dim();
    let sd = q.sd();
    let per_sample: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let (theta, eps) = q.draw(seed, first_stream + s);
            let (v, g) = target.eval(&theta);
            (v, g, eps)
        })
        .collect();
    let mut value = 0.0;
    let mut grad_mu = vec![0.0; d];
    let mut grad_log_sd = vec![0.0; d];
    let mut n_infeasible = 0;
    for (v, g, eps) in &per_sample {
        for i in 0..d {
            grad_mu[i] += eps[i] / sd[i];
            grad_log_sd[i] += eps[i] * eps[i];
        }
        if !v.is_finite() {
            n_infeasible += 1;
            value += INFEASIBLE_CLAMP;
            continue;
        }
        value += v;
        for i in 0..d {
            grad_mu[i] += g[i];
            grad_log_sd[i] += g[i] * eps[i] * sd[i];
        }
    }
    let n = n_samples as f64;
    value = value / n + q.entropy();
    grad_mu.iter_mut().for_each(|g| *g /= n);
    grad_log_sd.iter_mut().for_each(|g| *g /= n);
    ElboEstimate {
        value,
        grad_mu,
        grad_log_sd,
        n_infeasible,
    }
}

/// ELBO from fixed draws, so successive values differ only through `q`.
fn monitor_elbo<T: LogDensity + ?Sized>(
    q: &MeanFieldPosterior,
    target: &T,
    n: usize,
    seed: u64,
) -> f64 {
    let total: f64 = (0..n as u64)
        .into_par_iter()
        .map(|s| {
            let (theta, _) = q.draw(seed, MONITOR_STREAM + s);
            let v = target.value(&theta);
            if v.is_finite() {
                v
            } else {
                INFEASIBLE_CLAMP
            }
        })
        .sum();
    total / n as f64 + q.entropy()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViOptions {
    /// Draws per gradient estimate.
    pub n_grad_samples: usize,
    /// Fixed draws used to track the ELBO.
    pub n_monitor_samples: usize,
    /// Base step size; the effective step is `eta / sqrt(iter)` scaled by a
    /// running gradient magnitude.
    pub step_size: f64,
    pub max_iter: usize,
    /// Length of the windows whose mean ELBO is compared for convergence.
    pub window: usize,
    /// Relative change of consecutive window means counted as settled.
    pub rel_tol: f64,
    /// Consecutive settled window pairs required to declare convergence.
    pub patience: usize,
    /// Iterations before infeasible samples count towards aborting.
    pub warmup: usize,
    /// Initial `log sd` of every coordinate.
    pub init_log_sd: f64,
    /// Parameter draws from `q` used for the chronology.
    pub n_draws: usize,
    /// Posterior paths sampled per parameter draw.
    pub paths_per_draw: usize,
    pub seed: u64,
}

impl Default for ViOptions {
    fn default() -> Self {
        Self {
            n_grad_samples: 2,
            n_monitor_samples: 10,
            step_size: 0.1,
            max_iter: 10_000,
            window: 50,
            rel_tol: 1e-4,
            patience: 2,
            warmup: 100,
            init_log_sd: -2.0,
            n_draws: 20,
            paths_per_draw: 10,
            seed: 0,
        }
    }
}

/// Stochastic gradient ascent on the ELBO starting from `q0`. The report's
/// trace holds the ELBO of the averaged iterate, which is also what is
/// returned.
pub fn maximize_elbo<T: LogDensity + ?Sized>(
    target: &T,
    q0: MeanFieldPosterior,
    opts: &ViOptions,
) -> Result<(MeanFieldPosterior, FitReport)> {
    let start = Instant::now();
    if opts.n_grad_samples == 0 || opts.window == 0 || opts.n_monitor_samples == 0 {
        return Err(Error::Config(
            "gradient samples, monitor samples and window must be positive".into(),
        ));
    }
    let d = q0.dim();
    let mut q = q0;
    let mut avg = q.clone();
    let mut sq = vec![0.0; 2 * d];
    let mut trace = Vec::new();
    let mut prev_mean: Option<f64> = None;
    let mut settled = 0usize;
    let mut converged = false;
    let (mut bad, mut seen) = (0usize, 0usize);
    let (tau, decay, clip) = (1e-8, 0.1, 10.0);

    for t in 1..=opts.max_iter {
        let stream = (t as u64) * opts.n_grad_samples as u64;
        let est = elbo_estimate(&q, target, opts.n_grad_samples, opts.seed, stream);
        if t > opts.warmup {
            bad += est.n_infeasible;
            seen += opts.n_grad_samples;
        }
        let grad = est.grad_mu.iter().chain(&est.grad_log_sd);
        let rho = opts.step_size / (t as f64).sqrt();
        for (i, g) in grad.enumerate() {
            if t == 1 {
                sq[i] = g * g;
            }
            // Scale by the average before this gradient enters it.
            let ratio = (g / (tau + sq[i].sqrt())).clamp(-clip, clip);
            let step = rho * ratio;
            sq[i] = decay * g * g + (1.0 - decay) * sq[i];
            if i < d {
                q.mu[i] += step;
            } else {
                q.log_sd[i - d] = (q.log_sd[i - d] + step).clamp(-30.0, 10.0);
            }
        }
        // The tracked and returned q is a running average over roughly the
        // last third of the iterates.
        let k = t.min(opts.window.max(t / 3)) as f64;
        for i in 0..d {
            avg.mu[i] += (q.mu[i] - avg.mu[i]) / k;
            avg.log_sd[i] += (q.log_sd[i] - avg.log_sd[i]) / k;
        }
        trace.push(monitor_elbo(
            &avg,
            target,
            opts.n_monitor_samples,
            opts.seed,
        ));

        if t % opts.window == 0 {
            let w = &trace[t - opts.window..];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            if seen > 0 && bad * 2 > seen {
                return Err(Error::Inference(format!(
                    "{bad} of {seen} samples after warmup have zero likelihood; \
                     the tie-points are probably unreachable under the state space"
                )));
            }
            if let Some(prev) = prev_mean {
                if (mean - prev).abs() < opts.rel_tol * prev.abs().max(1.0) {
                    settled += 1;
                } else {
                    settled = 0;
                }
                if settled >= opts.patience.max(1) {
                    converged = true;
                    break;
                }
            }
            prev_mean = Some(mean);
        }
    }
    let mut report = FitReport::new("vi");
    report.iterations = trace.len();
    report.objective = *trace.last().unwrap_or(&NEG_INF);
    report.trace = trace;
    report.converged = converged;
    if bad > 0 {
        report.warnings.push(format!(
            "{bad} infeasible samples after warmup were clamped"
        ));
    }
    if !converged {
        warn!(
            "variational fit did not converge in {} iterations",
            opts.max_iter
        );
        report.warnings.push("did not converge".into());
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((avg, report))
}

/// The hierarchical log joint over unconstrained coordinates, including all
/// log-Jacobians. `a` and `b` are expressed non-centrally: with
/// independent priors `a_i = mu_a + tau_a * z_i`, and with the random walk
/// `a_i = mu_a + tau_a * (z_0 + ... + z_i)`.
#[derive(Debug, Clone)]
pub struct HierTarget {
    pub model: HierModel,
    pub layout: ParamLayout,
}

impl HierTarget {
    pub fn new(model: HierModel) -> Self {
        let n = model.n();
        let n_s = model.space.n_s();
        let mut layout = ParamLayout::new();
        layout.push("z_a", n, Transform::Identity);
        layout.push("z_b", n, Transform::Identity);
        layout.push("mu_a", 1, Transform::Identity);
        layout.push("tau_a", 1, Transform::Log);
        layout.push("mu_b", 1, Transform::Identity);
        layout.push("tau_b", 1, Transform::Log);
        layout.push("sigma", 1, Transform::Log);
        layout.push("p", model.space.total_states(), Transform::Logit);
        layout.push("alpha", n_s, Transform::Log);
        layout.push("beta", n_s, Transform::Log);
        Self { model, layout }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn scalar(&self, theta: &[f64], name: &str) -> f64 {
        theta[self.layout.range(name).start]
    }

    fn cumulative(&self, z: &[f64]) -> Vec<f64> {
        match self.model.prior.ab_prior {
            AbPrior::Independent => z.to_vec(),
            AbPrior::RandomWalk => z
                .iter()
                .scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect(),
        }
    }

    /// Constrained model parameters at `theta`.
    pub fn decode(&self, theta: &[f64]) -> (HierObservationParams, YearwiseStayProbabilities) {
        let l = &self.layout;
        let mu_a = self.scalar(theta, "mu_a");
        let tau_a = self.scalar(theta, "tau_a").exp();
        let mu_b = self.scalar(theta, "mu_b");
        let tau_b = self.scalar(theta, "tau_b").exp();
        let ca = self.cumulative(&theta[l.range("z_a")]);
        let cb = self.cumulative(&theta[l.range("z_b")]);
        let obs = HierObservationParams {
            a: ca.iter().map(|c| mu_a + tau_a * c).collect(),
            b: cb.iter().map(|c| mu_b + tau_b * c).collect(),
            sigma: self.scalar(theta, "sigma").exp(),
            mu_a,
            tau_a,
            mu_b,
            tau_b,
        };
        let yw = YearwiseStayProbabilities {
            p: theta[l.range("p")].iter().map(|&z| logistic(z)).collect(),
            alpha: theta[l.range("alpha")].iter().map(|v| v.exp()).collect(),
            beta: theta[l.range("beta")].iter().map(|v| v.exp()).collect(),
        };
        (obs, yw)
    }

    /// Unconstrained point for given model parameters (inverse of
    /// [`decode`](Self::decode)).
    pub fn encode(
        &self,
        obs: &HierObservationParams,
        yw: &YearwiseStayProbabilities,
    ) -> Result<Vec<f64>> {
        obs.validate(self.model.n())?;
        yw.validate(&self.model.space)?;
        let mut theta = vec![0.0; self.dim()];
        let l = &self.layout;
        let uncum = |x: &[f64], mu: f64, tau: f64| -> Vec<f64> {
            let c: Vec<f64> = x.iter().map(|v| (v - mu) / tau).collect();
            match self.model.prior.ab_prior {
                AbPrior::Independent => c,
                AbPrior::RandomWalk => (0..c.len())
                    .map(|i| if i == 0 { c[0] } else { c[i] - c[i - 1] })
                    .collect(),
            }
        };
        theta[l.range("z_a")].copy_from_slice(&uncum(&obs.a, obs.mu_a, obs.tau_a));
        theta[l.range("z_b")].copy_from_slice(&uncum(&obs.b, obs.mu_b, obs.tau_b));
        theta[l.range("mu_a").start] = obs.mu_a;
        theta[l.range("tau_a").start] = obs.tau_a.ln();
        theta[l.range("mu_b").start] = obs.mu_b;
        theta[l.range("tau_b").start] = obs.tau_b.ln();
        theta[l.range("sigma").start] = obs.sigma.ln();
        for (t, &p) in theta[l.range("p")].iter_mut().zip(&yw.p) {
            *t = logit(p);
        }
        for (t, &v) in theta[l.range("alpha")].iter_mut().zip(&yw.alpha) {
            *t = v.ln();
        }
        for (t, &v) in theta[l.range("beta")].iter_mut().zip(&yw.beta) {
            *t = v.ln();
        }
        Ok(theta)
    }

    /// Emissions and transitions at `theta`.
    pub fn chain(&self, theta: &[f64]) -> Result<(EmissionMatrix, Bidiagonal)> {
        let (obs, _) = self.decode(theta);
        if !(obs.sigma > 0.0 && obs.sigma.is_finite()) {
            return Err(Error::param("sigma", "not positive and finite"));
        }
        let em = self.model.emissions(&obs)?;
        let trans = Bidiagonal::from_logits(&self.model.space, &theta[self.layout.range("p")])?;
        Ok((em, trans))
    }

    /// Everything except the likelihood, with its gradient.
    fn prior_eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let m = &self.model;
        let space = &m.space;
        let n_s = space.n_s();
        let mut lp = 0.0;
        for name in ["z_a", "z_b"] {
            for i in l.range(name) {
                lp += -0.5 * theta[i] * theta[i];
                grad[i] -= theta[i];
            }
        }
        lp -= m.n() as f64 * (2.0 * std::f64::consts::PI).ln();
        for (name, scale) in [
            ("tau_a", m.prior.tau_scale_a),
            ("tau_b", m.prior.tau_scale_b),
        ] {
            let i = l.range(name).start;
            let tau = theta[i].exp();
            lp += half_normal_logpdf(tau, scale) + theta[i];
            grad[i] += 1.0 - tau * tau / (scale * scale);
        }
        // Flat prior on sigma; only the Jacobian remains.
        let is = l.range("sigma").start;
        lp += theta[is];
        grad[is] += 1.0;

        // Beta prior on p (including the logit Jacobian) and Gamma hyperpriors.
        let (ra, rb, rp) = (l.range("alpha"), l.range("beta"), l.range("p"));
        let alpha: Vec<f64> = theta[ra.clone()].iter().map(|v| v.exp()).collect();
        let beta: Vec<f64> = theta[rb.clone()].iter().map(|v| v.exp()).collect();
        let mut sum_logp = vec![0.0; n_s];
        let mut sum_log1p = vec![0.0; n_s];
        let mut count = vec![0.0; n_s];
        for (k, i) in rp.clone().enumerate() {
            let z = theta[i];
            let j = space.slot(k);
            let (lp_k, l1p_k) = (-softplus(-z), -softplus(z));
            lp += alpha[j] * lp_k + beta[j] * l1p_k;
            let p = logistic(z);
            grad[i] += alpha[j] * (1.0 - p) - beta[j] * p;
            sum_logp[j] += lp_k;
            sum_log1p[j] += l1p_k;
            count[j] += 1.0;
        }
        let (shape, rate) = (m.prior.gamma_shape, m.prior.gamma_rate);
        let log_norm = shape * rate.ln() - ln_gamma(shape);
        for j in 0..n_s {
            let (al, be) = (alpha[j], beta[j]);
            lp -= count[j] * (ln_gamma(al) + ln_gamma(be) - ln_gamma(al + be));
            let ds = digamma(al + be);
            grad[ra.start + j] += al * (sum_logp[j] - count[j] * (digamma(al) - ds));
            grad[rb.start + j] += be * (sum_log1p[j] - count[j] * (digamma(be) - ds));
            for (x, idx) in [(al, ra.start + j), (be, rb.start + j)] {
                lp += log_norm + shape * x.ln() - rate * x;
                grad[idx] += shape - rate * x;
            }
        }
        lp
    }

    fn likelihood_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let Ok((em, trans)) = self.chain(theta) else {
            return NEG_INF;
        };
        let Ok(fwd) = ForwardPass::run(&em, &trans, &self.model.log_init) else {
            return NEG_INF;
        };
        if !fwd.is_feasible() {
            return NEG_INF;
        }
        let ll = fwd.loglik();
        let Ok(post) = Posterior::from_forward(fwd, &em, &trans) else {
            return NEG_INF;
        };
        let m = &self.model;
        let l = &self.layout;
        let counts = ExpectedCounts::collect(&post, &em, &trans, &m.space);
        let (obs, _) = self.decode(theta);
        let n = m.n();
        let proxy = m.proxy_rows();
        let mut ga = vec![0.0; n];
        let mut gb = vec![0.0; n];
        let mut gs = 0.0;
        for i in 0..n {
            if !proxy[i] {
                continue;
            }
            let (x, y, z) = emission_row_gradient(
                m.data.proxy()[i],
                obs.a[i],
                obs.b[i],
                obs.sigma,
                &counts.phase_gamma[i],
            );
            ga[i] = x;
            gb[i] = y;
            gs += z;
        }
        grad[l.range("sigma").start] += gs * obs.sigma;
        for (name_z, name_mu, name_tau, g) in
            [("z_a", "mu_a", "tau_a", &ga), ("z_b", "mu_b", "tau_b", &gb)]
        {
            let rz = l.range(name_z);
            let tau = theta[l.range(name_tau).start].exp();
            let c = self.cumulative(&theta[rz.clone()]);
            grad[l.range(name_mu).start] += g.iter().sum::<f64>();
            grad[l.range(name_tau).start] +=
                tau * g.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>();
            match m.prior.ab_prior {
                AbPrior::Independent => {
                    for i in 0..n {
                        grad[rz.start + i] += tau * g[i];
                    }
                }
                AbPrior::RandomWalk => {
                    let mut tail = 0.0;
                    for i in (0..n).rev() {
                        tail += g[i];
                        grad[rz.start + i] += tau * tail;
                    }
                }
            }
        }
        let rp = l.range("p");
        let k_total = m.space.total_states();
        for k in 0..k_total - 1 {
            let p = logistic(theta[rp.start + k]);
            grad[rp.start + k] += counts.stay[k] * (1.0 - p) - counts.advance[k] * p;
        }
        ll
    }
}

impl LogDensity for HierTarget {
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.dim()];
        let ll = self.likelihood_grad(theta, &mut grad);
        if !ll.is_finite() {
            return (NEG_INF, vec![0.0; self.dim()]);
        }
        let lp = self.prior_eval(theta, &mut grad);
        (ll + lp, grad)
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let Ok((em, trans)) = self.chain(theta) else {
            return NEG_INF;
        };
        let Ok(fwd) = ForwardPass::run(&em, &trans, &self.model.log_init) else {
            return NEG_INF;
        };
        let ll = fwd.loglik();
        if !ll.is_finite() {
            return NEG_INF;
        }
        let mut scratch = vec![0.0; self.dim()];
        ll + self.prior_eval(theta, &mut scratch)
    }
}

/// Result of [`fit_vi`].
#[derive(Debug, Clone)]
pub struct ViFit {
    pub q: MeanFieldPosterior,
    pub report: FitReport,
    pub target: HierTarget,
}

/// Fits the hierarchical model. The variational means start at the
/// maximum-likelihood fit of the basic model with `a_i = a`, `b_i = b` and
/// `p` tiled over years.
pub fn fit_vi(model: HierModel, opts: &ViOptions) -> Result<ViFit> {
    let space = model.space;
    let n_s = space.n_s();
    let init = initial_params(&model.data, n_s)?;
    let mle_opts = MleOptions {
        n_paths: 0,
        seed: opts.seed,
        ..MleOptions::default()
    };
    let mle = fit_mle(&model.data, &space, &init, &model.log_init, &mle_opts)?;
    info!(
        "variational fit initialized at a={:.4} b={:.4} sigma={:.4}",
        mle.params.obs.a, mle.params.obs.b, mle.params.obs.sigma
    );
    let n = model.n();
    let (_, sd) = crate::math::mean_sd(model.data.proxy());
    let tau0 = (0.1 * sd).max(1e-3);
    let obs = HierObservationParams::constant(
        n,
        mle.params.obs.a,
        mle.params.obs.b,
        mle.params.obs.sigma,
        tau0,
        tau0,
    );
    let yw = YearwiseStayProbabilities::tiled(&space, mle.params.p.as_slice(), 10.0);
    let target = HierTarget::new(model);
    let mu = target.encode(&obs, &yw)?;
    let log_sd = vec![opts.init_log_sd; mu.len()];
    let q0 = MeanFieldPosterior::new(mu, log_sd)?;
    let (q, mut report) = maximize_elbo(&target, q0, opts)?;
    let (obs, yw) = target.decode(&q.mu);
    for (name, v) in [
        ("a", obs.a),
        ("b", obs.b),
        ("sigma", vec![obs.sigma]),
        ("mu_a", vec![obs.mu_a]),
        ("tau_a", vec![obs.tau_a]),
        ("mu_b", vec![obs.mu_b]),
        ("tau_b", vec![obs.tau_b]),
        ("p", yw.p),
        ("alpha", yw.alpha),
        ("beta", yw.beta),
    ] {
        report.params.insert(name.to_string(), v);
    }
    Ok(ViFit { q, report, target })
}

/// Posterior chronology under `q`: parameters are drawn from `q` and exact
/// smoothing and path sampling are run for each draw; the results are mixed
/// with equal weights.
pub fn vi_chronology(
    target: &HierTarget,
    q: &MeanFieldPosterior,
    n_draws: usize,
    paths_per_draw: usize,
    seed: u64,
) -> Result<Chronology> {
    let model = &target.model;
    let parts: Vec<Option<Chronology>> = (0..n_draws as u64)
        .into_par_iter()
        .map(|d| {
            let (theta, _) = q.draw(seed, DRAW_STREAM + d);
            let (em, trans) = target.chain(&theta).ok()?;
            let post = Posterior::run(&em, &trans, &model.log_init).ok()?;
            let mut rng = rng_stream(seed, DRAW_STREAM + n_draws as u64 + d);
            let paths = post
                .forward()
                .sample_paths(&trans, paths_per_draw, &mut rng)
                .ok()?;
            Some(Chronology::from_posterior(
                model.space,
                model.data.depths(),
                &post,
                paths,
            ))
        })
        .collect();
    let skipped = parts.iter().filter(|p| p.is_none()).count();
    if skipped > 0 {
        warn!("{skipped} of {n_draws} parameter draws were infeasible and skipped");
    }
    let parts: Vec<Chronology> = parts.into_iter().flatten().collect();
    if parts.is_empty() {
        return Err(Error::Inference(
            "every parameter draw was infeasible".into(),
        ));
    }
    Chronology::mixture(parts)
}
