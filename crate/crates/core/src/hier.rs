//! Hierarchical extension: per-datapoint amplitude/offset, year-varying stay
//! probabilities with phase-shared Beta priors, and tie-point rows that pin
//! the year of the chain at known depths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::stats::{emission_row_gradient, ExpectedCounts};
use crate::hmm::{Bidiagonal, EmissionMatrix, EmissionRow, ForwardPass, Posterior, StateSpace};
use crate::math::{beta_logpdf, digamma, gamma_logpdf, half_normal_logpdf, normal_logpdf, NEG_INF};
use crate::series::DepthSeries;

/// A known `(depth, year)` pair, resolved to a row of the depth series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TiePoint {
    pub depth_index: usize,
    pub year: usize,
}

/// How a tie-point row combines with the proxy reading at the same depth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// The tie observation replaces the proxy likelihood at that depth.
    #[default]
    Replace,
    /// Both the proxy likelihood and the tie observation apply.
    Both,
}

/// Log emission row of a tie-point: `log(1/n_s)` on states whose year is the
/// tie year, `-inf` elsewhere.
pub fn tie_emission_row(space: &StateSpace, tie: &TiePoint) -> Result<Vec<f64>> {
    if tie.year >= space.m() {
        return Err(Error::Config(format!(
            "tie-point year {} is outside the modeled range [0, {})",
            tie.year,
            space.m()
        )));
    }
    let states = space.states_in_year(tie.year);
    if states.is_empty() {
        return Err(Error::Config(format!(
            "no state of the lattice falls in year {} (n_s = {})",
            tie.year,
            space.n_s()
        )));
    }
    let w = -(space.n_s() as f64).ln();
    Ok((0..space.total_states())
        .map(|k| if states.contains(&k) { w } else { NEG_INF })
        .collect())
}

/// Installs tie-point rows into an emission matrix.
pub fn attach_tiepoints(
    mut emissions: EmissionMatrix,
    ties: &[TiePoint],
    mode: TieMode,
) -> Result<EmissionMatrix> {
    let space = *emissions.space();
    let mut seen = std::collections::HashSet::new();
    for tie in ties {
        if tie.depth_index >= emissions.n_rows() {
            return Err(Error::Config(format!(
                "tie-point index {} is beyond the {} observations",
                tie.depth_index,
                emissions.n_rows()
            )));
        }
        if !seen.insert(tie.depth_index) {
            return Err(Error::Config(format!(
                "two tie-points share observation {}",
                tie.depth_index
            )));
        }
        let tie_row = tie_emission_row(&space, tie)?;
        let row = match mode {
            TieMode::Replace => tie_row,
            TieMode::Both => tie_row
                .iter()
                .enumerate()
                .map(|(k, &t)| t + emissions.get(tie.depth_index, k))
                .collect(),
        };
        emissions.set_row(tie.depth_index, EmissionRow::Dense(row));
    }
    Ok(emissions)
}

/// Prior family for the per-datapoint `a_i`, `b_i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbPrior {
    /// `a_i ~ N(mu_a, tau_a)` independently.
    #[default]
    Independent,
    /// `a_0 ~ N(mu_a, tau_a)`, `a_i ~ N(a_{i-1}, tau_a)`.
    RandomWalk,
}

/// Fixed hyperprior settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierPrior {
    pub ab_prior: AbPrior,
    /// Half-normal scale on `tau_a`.
    pub tau_scale_a: f64,
    /// Half-normal scale on `tau_b`.
    pub tau_scale_b: f64,
    /// Gamma(shape, rate) hyperprior on every Beta alpha/beta.
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl HierPrior {
    /// Defaults with hyper-scales set to the proxy's standard deviation.
    pub fn for_data(data: &DepthSeries) -> Self {
        let (_, sd) = crate::math::mean_sd(data.proxy());
        let scale = if sd > 0.0 { sd } else { 1.0 };
        Self {
            ab_prior: AbPrior::Independent,
            tau_scale_a: scale,
            tau_scale_b: scale,
            gamma_shape: 2.0,
            gamma_rate: 0.5,
        }
    }
}

/// Per-datapoint observation parameters with their hierarchical locations
/// and scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierObservationParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: f64,
    pub mu_a: f64,
    pub tau_a: f64,
    pub mu_b: f64,
    pub tau_b: f64,
}

impl HierObservationParams {
    /// All datapoints share `(a, b)`.
    pub fn constant(n: usize, a: f64, b: f64, sigma: f64, tau_a: f64, tau_b: f64) -> Self {
        Self {
            a: vec![a; n],
            b: vec![b; n],
            sigma,
            mu_a: a,
            tau_a,
            mu_b: b,
            tau_b,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.a.len() != n || self.b.len() != n {
            return Err(Error::param(
                "a/b",
                format!("need {n} per-datapoint values"),
            ));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("tau_a", self.tau_a),
            ("tau_b", self.tau_b),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Year-varying stay probabilities and their per-slot Beta hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearwiseStayProbabilities {
    /// One entry per state (`m * n_s`).
    pub p: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl YearwiseStayProbabilities {
    /// Tiles per-slot stay probabilities over all years.
    pub fn tiled(space: &StateSpace, p_slot: &[f64], concentration: f64) -> Self {
        let p = (0..space.total_states())
            .map(|k| p_slot[space.slot(k)])
            .collect();
        Self {
            p,
            alpha: p_slot.iter().map(|x| concentration * x).collect(),
            beta: p_slot.iter().map(|x| concentration * (1.0 - x)).collect(),
        }
    }

    pub fn validate(&self, space: &StateSpace) -> Result<()> {
        if self.p.len() != space.total_states() {
            return Err(Error::param("p", "need one stay probability per state"));
        }
        if self.alpha.len() != space.n_s() || self.beta.len() != space.n_s() {
            return Err(Error::param("alpha/beta", "need one value per phase"));
        }
        if let Some(j) = self.p.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::param(format!("p[{j}]"), "must lie in (0, 1)"));
        }
        for (name, v) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if let Some(j) = v.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::param(format!("{name}[{j}]"), "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Separately reported terms of the hierarchical log joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTerms {
    pub loglik: f64,
    pub beta_prior: f64,
    pub ab_prior: f64,
    pub tau_hyperprior: f64,
    pub beta_hyperprior: f64,
}

impl JointTerms {
    pub fn total(&self) -> f64 {
        self.loglik + self.beta_prior + self.ab_prior + self.tau_hyperprior + self.beta_hyperprior
    }

    pub fn prior_total(&self) -> f64 {
        self.total() - self.loglik
    }
}

/// Gradient of the log joint w.r.t. every constrained parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct HierGradient {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: f64,
    pub mu_a: f64,
    pub tau_a: f64,
    pub mu_b: f64,
    pub tau_b: f64,
    pub p: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// The hierarchical model bound to one dataset.
#[derive(Debug, Clone)]
pub struct HierModel {
    pub data: DepthSeries,
    pub space: StateSpace,
    pub ties: Vec<TiePoint>,
    pub tie_mode: TieMode,
    pub prior: HierPrior,
    pub log_init: Vec<f64>,
}

impl HierModel {
    pub fn new(
        data: DepthSeries,
        space: StateSpace,
        ties: Vec<TiePoint>,
        tie_mode: TieMode,
        prior: HierPrior,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Input("no observations".into()));
        }
        let log_init = space.default_log_init();
        // Validate ties eagerly.
        let probe = EmissionMatrix::from_rows(
            space,
            vec![EmissionRow::Periodic(vec![0.0; space.n_s()]); data.len()],
        )?;
        attach_tiepoints(probe, &ties, tie_mode)?;
        Ok(Self {
            data,
            space,
            ties,
            tie_mode,
            prior,
            log_init,
        })
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// Rows whose likelihood depends on `(a_i, b_i, sigma)`.
    pub fn proxy_rows(&self) -> Vec<bool> {
        let mut mask = vec![true; self.n()];
        if self.tie_mode == TieMode::Replace {
            for t in &self.ties {
                mask[t.depth_index] = false;
            }
        }
        mask
    }

    pub fn emissions(&self, obs: &HierObservationParams) -> Result<EmissionMatrix> {
        let em = EmissionMatrix::build_varying(&self.data, &self.space, &obs.a, &obs.b, obs.sigma)?;
        attach_tiepoints(em, &self.ties, self.tie_mode)
    }

    pub fn transitions(&self, yw: &YearwiseStayProbabilities) -> Result<Bidiagonal> {
        Bidiagonal::yearwise(&self.space, &yw.p)
    }

    /// Each term of the log joint; `loglik` is `-inf` for infeasible ties.
    pub fn terms(
        &self,
        obs: &HierObservationParams,
        yw: &YearwiseStayProbabilities,
    ) -> Result<JointTerms> {
        obs.validate(self.n())?;
        yw.validate(&self.space)?;
        let em = self.emissions(obs)?;
        let trans = self.transitions(yw)?;
        let loglik = ForwardPass::run(&em, &trans, &self.log_init)?.loglik();
        Ok(self.prior_terms(obs, yw, loglik))
    }

    fn prior_terms(
        &self,
        obs: &HierObservationParams,
        yw: &YearwiseStayProbabilities,
        loglik: f64,
    ) -> JointTerms {
        let space = &self.space;
        let beta_prior =
            yw.p.iter()
                .enumerate()
                .map(|(k, &p)| {
                    let j = space.slot(k);
                    beta_logpdf(p, yw.alpha[j], yw.beta[j])
                })
                .sum();
        let ab_prior = ab_logprior(&obs.a, obs.mu_a, obs.tau_a, self.prior.ab_prior)
            + ab_logprior(&obs.b, obs.mu_b, obs.tau_b, self.prior.ab_prior);
        let tau_hyperprior = half_normal_logpdf(obs.tau_a, self.prior.tau_scale_a)
            + half_normal_logpdf(obs.tau_b, self.prior.tau_scale_b);
        let beta_hyperprior = yw
            .alpha
            .iter()
            .chain(&yw.beta)
            .map(|&x| gamma_logpdf(x, self.prior.gamma_shape, self.prior.gamma_rate))
            .sum();
        JointTerms {
            loglik,
            beta_prior,
            ab_prior,
            tau_hyperprior,
            beta_hyperprior,
        }
    }

    /// The variational target density (up to the transform Jacobians added by
    /// the inference layer).
    pub fn log_joint(
        &self,
        obs: &HierObservationParams,
        yw: &YearwiseStayProbabilities,
    ) -> Result<f64> {
        Ok(self.terms(obs, yw)?.total())
    }

    /// Log joint and its gradient. For an infeasible tie configuration the
    /// value is `-inf` and the gradient is all zeros.
    pub fn log_joint_grad(
        &self,
        obs: &HierObservationParams,
        yw: &YearwiseStayProbabilities,
    ) -> Result<(f64, HierGradient)> {
        obs.validate(self.n())?;
        yw.validate(&self.space)?;
        let n = self.n();
        let n_s = self.space.n_s();
        let k_total = self.space.total_states();
        let em = self.emissions(obs)?;
        let trans = self.transitions(yw)?;
        let fwd = ForwardPass::run(&em, &trans, &self.log_init)?;

        let mut g = HierGradient {
            a: vec![0.0; n],
            b: vec![0.0; n],
            sigma: 0.0,
            mu_a: 0.0,
            tau_a: 0.0,
            mu_b: 0.0,
            tau_b: 0.0,
            p: vec![0.0; k_total],
            alpha: vec![0.0; n_s],
            beta: vec![0.0; n_s],
        };
        if !fwd.is_feasible() {
            return Ok((NEG_INF, g));
        }
        let loglik = fwd.loglik();
        let post = Posterior::from_forward(fwd, &em, &trans)?;
        let counts = ExpectedCounts::collect(&post, &em, &trans, &self.space);

        // Likelihood part.
        let proxy = self.proxy_rows();
        for i in 0..n {
            if !proxy[i] {
                continue;
            }
            let (ga, gb, gs) = emission_row_gradient(
                self.data.proxy()[i],
                obs.a[i],
                obs.b[i],
                obs.sigma,
                &counts.phase_gamma[i],
            );
            g.a[i] += ga;
            g.b[i] += gb;
            g.sigma += gs;
        }
        g.p = counts.stay_gradient(|k| yw.p[k]);

        // Beta prior over stay probabilities and its hyperparameters.
        for (k, &p) in yw.p.iter().enumerate() {
            let j = self.space.slot(k);
            let (al, be) = (yw.alpha[j], yw.beta[j]);
            g.p[k] += (al - 1.0) / p - (be - 1.0) / (1.0 - p);
            let ds = digamma(al + be);
            g.alpha[j] += p.ln() - digamma(al) + ds;
            g.beta[j] += (-p).ln_1p() - digamma(be) + ds;
        }
        let (shape, rate) = (self.prior.gamma_shape, self.prior.gamma_rate);
        for j in 0..n_s {
            g.alpha[j] += (shape - 1.0) / yw.alpha[j] - rate;
            g.beta[j] += (shape - 1.0) / yw.beta[j] - rate;
        }

        // Priors on a_i, b_i and their scales.
        let (ga, gmu, gtau) = ab_logprior_grad(&obs.a, obs.mu_a, obs.tau_a, self.prior.ab_prior);
        g.a.iter_mut().zip(ga).for_each(|(x, y)| *x += y);
        g.mu_a += gmu;
        g.tau_a += gtau - obs.tau_a / self.prior.tau_scale_a.powi(2);
        let (gb, gmu, gtau) = ab_logprior_grad(&obs.b, obs.mu_b, obs.tau_b, self.prior.ab_prior);
        g.b.iter_mut().zip(gb).for_each(|(x, y)| *x += y);
        g.mu_b += gmu;
        g.tau_b += gtau - obs.tau_b / self.prior.tau_scale_b.powi(2);

        Ok((self.prior_terms(obs, yw, loglik).total(), g))
    }
}

fn ab_residuals(x: &[f64], mu: f64, kind: AbPrior) -> Vec<f64> {
    match kind {
        AbPrior::Independent => x.iter().map(|v| v - mu).collect(),
        AbPrior::RandomWalk => x
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 { v - mu } else { v - x[i - 1] })
            .collect(),
    }
}

fn ab_logprior(x: &[f64], mu: f64, tau: f64, kind: AbPrior) -> f64 {
    ab_residuals(x, mu, kind)
        .iter()
        .map(|r| normal_logpdf(*r, 0.0, tau))
        .sum()
}

/// Gradient of [`ab_logprior`] w.r.t. `(x, mu, tau)`.
fn ab_logprior_grad(x: &[f64], mu: f64, tau: f64, kind: AbPrior) -> (Vec<f64>, f64, f64) {
    let r = ab_residuals(x, mu, kind);
    let t2 = tau * tau;
    let gtau = r.iter().map(|ri| ri * ri / (t2 * tau) - 1.0 / tau).sum();
    match kind {
        AbPrior::Independent => {
            let gx: Vec<f64> = r.iter().map(|ri| -ri / t2).collect();
            let gmu = r.iter().sum::<f64>() / t2;
            (gx, gmu, gtau)
        }
        AbPrior::RandomWalk => {
            let n = x.len();
            let gx = (0..n)
                .map(|i| {
                    let mut v = -r[i] / t2;
                    if i + 1 < n {
                        v += r[i + 1] / t2;
                    }
                    v
                })
                .collect();
            (gx, r[0] / t2, gtau)
        }
    }
}
