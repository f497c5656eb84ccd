//! Synthetic cores: ancestral sampling from the discrete and continuous
//! chains, and Euler–Maruyama paths of the latent Matérn-3/2 SDE prior with
//! Laplace observation noise.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cts::RateVector;
use crate::error::{Error, Result};
use crate::hmm::{ObservationParams, StateSpace, StayProbabilities};
use crate::math::{rng_stream, softplus};
use crate::series::DepthSeries;

/// Transition law used by [`simulate_hmm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainSpec {
    /// Stay-or-advance once per sample.
    Discrete(StayProbabilities),
    /// Exponential holding depths with per-phase rates.
    Continuous(RateVector),
}

/// A simulated core with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCore {
    pub data: DepthSeries,
    pub states: Vec<usize>,
}

impl SimulatedCore {
    /// Number of years entered along the true path.
    pub fn years_spanned(&self, space: &StateSpace) -> usize {
        match (self.states.first(), self.states.last()) {
            (Some(&a), Some(&b)) => space.year(b) - space.year(a),
            _ => 0,
        }
    }
}

/// Ancestral sampling at the given depths. The first state is uniform over
/// the first `n_s` states.
pub fn simulate_hmm(
    space: &StateSpace,
    chain: &ChainSpec,
    obs: &ObservationParams,
    depths: &[f64],
    seed: u64,
) -> Result<SimulatedCore> {
    obs.validate()?;
    let n_s = space.n_s();
    let k_total = space.total_states();
    match chain {
        ChainSpec::Discrete(p) if p.len() != n_s => {
            return Err(Error::param("p", format!("need {n_s} stay probabilities")))
        }
        ChainSpec::Continuous(q) if q.len() != n_s => {
            return Err(Error::param("q", format!("need {n_s} rates")))
        }
        _ => {}
    }
    if depths.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Input("depths must be strictly increasing".into()));
    }
    let mut rng = rng_stream(seed, 0);
    let noise = Normal::new(0.0, obs.sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
    let mut states = Vec::with_capacity(depths.len());
    let mut proxy = Vec::with_capacity(depths.len());
    let mut k = rng.random_range(0..n_s.min(k_total));
    for i in 0..depths.len() {
        if i > 0 {
            k = match chain {
                ChainSpec::Discrete(p) => {
                    let stay = p.as_slice()[space.slot(k)];
                    if k + 1 < k_total && rng.random::<f64>() >= stay {
                        k + 1
                    } else {
                        k
                    }
                }
                ChainSpec::Continuous(q) => {
                    let mut remaining = depths[i] - depths[i - 1];
                    while k + 1 < k_total {
                        let hold: f64 = Exp::new(q.as_slice()[space.slot(k)])
                            .expect("positive rate")
                            .sample(&mut rng);
                        if hold > remaining {
                            break;
                        }
                        remaining -= hold;
                        k += 1;
                    }
                    k
                }
            };
        }
        if k + 1 == k_total {
            warn!("simulated chain reached the last modeled state; enlarge m");
        }
        states.push(k);
        proxy.push(obs.mean(space.time(k)) + noise.sample(&mut rng));
    }
    Ok(SimulatedCore {
        data: DepthSeries::new(depths.to_vec(), proxy)?,
        states,
    })
}

/// Regular depth grid `spacing, 2 spacing, ...`.
pub fn regular_depths(n: usize, spacing: f64) -> Vec<f64> {
    (1..=n).map(|i| i as f64 * spacing).collect()
}

/// Parameters of the latent SDE prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdePriorParams {
    /// Inverse length scale of the Matérn-3/2 process (1/m).
    pub lambda: f64,
    /// Time-drift scale (years/m).
    pub alpha: f64,
    /// Diffusion of time.
    pub eps: f64,
    pub laplace_scale: f64,
}

impl Default for SdePriorParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1.0,
            eps: 1e-2,
            laplace_scale: 0.05,
        }
    }
}

impl SdePriorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", "must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "must be > 0"));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", "must be >= 0"));
        }
        if !(self.laplace_scale >= 0.0 && self.laplace_scale.is_finite()) {
            return Err(Error::param("laplace_scale", "must be >= 0"));
        }
        Ok(())
    }

    /// Stationary variances of `(z_a, z_b)`.
    pub fn stationary_variances(&self) -> (f64, f64) {
        let l = self.lambda;
        (1.0 / (4.0 * l * l * l), 1.0 / (4.0 * l))
    }
}

/// Drift of `(z_a, z_b, t)`.
pub fn sde_drift(state: [f64; 3], params: &SdePriorParams) -> [f64; 3] {
    let [za, zb, _] = state;
    let l = params.lambda;
    [zb, -l * l * za - 2.0 * l * zb, params.alpha * softplus(za)]
}

/// One Euler–Maruyama step of length `h` given the Brownian increments
/// `dw` driving `z_b` and `t`.
pub fn em_step(x: [f64; 3], h: f64, dw: [f64; 2], params: &SdePriorParams) -> [f64; 3] {
    let d = sde_drift(x, params);
    [
        x[0] + d[0] * h,
        x[1] + d[1] * h + dw[0],
        x[2] + d[2] * h + params.eps * dw[1],
    ]
}

/// One simulated trajectory on the depth grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    pub depths: Vec<f64>,
    pub z_a: Vec<f64>,
    pub z_b: Vec<f64>,
    pub t: Vec<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Input("empty depth grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Input(
            "depth grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Simulates one path driven by `rng`, with `substeps` Euler steps per grid
/// interval. The start is drawn from the stationary law with `t = 0`.
fn em_path<R: Rng + ?Sized>(
    params: &SdePriorParams,
    grid: &[f64],
    substeps: usize,
    rng: &mut R,
) -> SdePath {
    let (va, vb) = params.stationary_variances();
    let n0: f64 = StandardNormal.sample(rng);
    let n1: f64 = StandardNormal.sample(rng);
    let mut x = [va.sqrt() * n0, vb.sqrt() * n1, 0.0];
    let mut path = SdePath {
        depths: grid.to_vec(),
        z_a: vec![x[0]],
        z_b: vec![x[1]],
        t: vec![x[2]],
    };
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        let sh = h.sqrt();
        for _ in 0..substeps {
            let dw1: f64 = StandardNormal.sample(rng);
            let dw2: f64 = StandardNormal.sample(rng);
            x = em_step(x, h, [sh * dw1, sh * dw2], params);
        }
        path.z_a.push(x[0]);
        path.z_b.push(x[1]);
        path.t.push(x[2]);
    }
    path
}

/// Independent Euler–Maruyama paths; path `j` uses RNG stream `j`.
pub fn euler_maruyama(
    params: &SdePriorParams,
    grid: &[f64],
    n_paths: usize,
    substeps: usize,
    seed: u64,
) -> Result<Vec<SdePath>> {
    params.validate()?;
    check_grid(grid)?;
    let substeps = substeps.max(1);
    let max_step = grid
        .windows(2)
        .map(|w| (w[1] - w[0]) / substeps as f64)
        .fold(0.0, f64::max);
    if params.lambda * max_step > 0.1 {
        warn!(
            "Euler step {max_step} is coarse for lambda {}; consider sub-stepping",
            params.lambda
        );
    }
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng_stream(seed, j);
            em_path(params, grid, substeps, &mut rng)
        })
        .collect())
}

/// Seasonal signal of the SDE observation model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeasonalForm {
    /// `sin(pi t)`, a two-year period.
    #[default]
    SinPi,
    /// `sin(2 pi t)`, a one-year period.
    Sin2Pi,
}

impl SeasonalForm {
    pub fn value(self, t: f64) -> f64 {
        match self {
            SeasonalForm::SinPi => (std::f64::consts::PI * t).sin(),
            SeasonalForm::Sin2Pi => (std::f64::consts::TAU * t).sin(),
        }
    }
}

/// A proxy series generated from one SDE path.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeDataset {
    pub data: DepthSeries,
    pub path: SdePath,
}

/// Laplace(0, b) draw by inverting the CDF.
fn laplace<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// One SDE path observed with Laplace noise around the seasonal signal.
pub fn simulate_sde_dataset(
    params: &SdePriorParams,
    grid: &[f64],
    substeps: usize,
    form: SeasonalForm,
    seed: u64,
) -> Result<SdeDataset> {
    params.validate()?;
    check_grid(grid)?;
    let mut rng = rng_stream(seed, 0);
    let path = em_path(params, grid, substeps.max(1), &mut rng);
    let mut noise_rng = rng_stream(seed, 1);
    let proxy = path
        .t
        .iter()
        .map(|&t| {
            let e = if params.laplace_scale > 0.0 {
                laplace(&mut noise_rng, params.laplace_scale)
            } else {
                0.0
            };
            form.value(t) + e
        })
        .collect();
    Ok(SdeDataset {
        data: DepthSeries::new(grid.to_vec(), proxy)?,
        path,
    })
}
