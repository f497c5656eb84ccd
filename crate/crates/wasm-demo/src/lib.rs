//! Browser bindings for three operations of the chronology engine. Each takes
//! a JSON object of settings (missing keys use defaults) and returns JSON.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use icechron::cts::{
    fit_mle_cts, gap_posterior, initial_cts_params, CtsOptions, CtsParams, RateVector,
};
use icechron::hmm::{ObservationParams, StateSpace, StayProbabilities};
use icechron::inference::{fit_mle, initial_params, smoothed_chronology, MleOptions};
use icechron::simulate::{
    euler_maruyama, regular_depths, simulate_hmm, simulate_sde_dataset, ChainSpec, SdePriorParams,
    SeasonalForm,
};

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Core(#[from] icechron::Error),
    #[error("bad settings: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Limit(String),
}

fn at_most(name: &str, value: usize, max: usize) -> Result<(), DemoError> {
    if value > max {
        return Err(DemoError::Limit(format!(
            "{name} = {value} exceeds {max} in the demo"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DateSettings {
    pub n: usize,
    pub n_s: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub spacing: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for DateSettings {
    fn default() -> Self {
        Self {
            n: 600,
            n_s: 6,
            p: 0.6,
            a: 1.0,
            b: 0.0,
            sigma: 0.5,
            spacing: 0.01,
            n_paths: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Layer {
    pub year: usize,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Serialize)]
pub struct DateResult {
    pub depths: Vec<f64>,
    pub proxy: Vec<f64>,
    /// Depths at which the simulated core starts a new year.
    pub true_boundaries: Vec<f64>,
    pub true_years: usize,
    /// Median and 90% interval of the inferred year count.
    pub years: [usize; 3],
    pub layers: Vec<Layer>,
    pub time_q05: Vec<f64>,
    pub time_q50: Vec<f64>,
    pub time_q95: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub p: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
}

/// Simulates a regularly sampled core, fits it and summarizes the chronology.
pub fn date_core(settings: &str) -> Result<String, DemoError> {
    let s: DateSettings = serde_json::from_str(settings)?;
    at_most("n", s.n, 5000)?;
    at_most("n_paths", s.n_paths, 1000)?;
    let space = StateSpace::for_observations(s.n, s.n_s, 10)?;
    let chain = ChainSpec::Discrete(StayProbabilities::uniform(s.n_s, s.p)?);
    let obs = ObservationParams::new(s.a, s.b, s.sigma)?;
    let sim = simulate_hmm(
        &space,
        &chain,
        &obs,
        &regular_depths(s.n, s.spacing),
        s.seed,
    )?;
    let data = &sim.data;
    let log_init = space.default_log_init();
    let init = initial_params(data, s.n_s)?;
    let fit = fit_mle(data, &space, &init, &log_init, &MleOptions::default())?;
    let em = fit.params.emissions(data, &space);
    let trans = fit.params.transitions(&space)?;
    let (chron, _) = smoothed_chronology(data, &space, &em, &trans, &log_init, s.n_paths, s.seed)?;

    let true_boundaries = (1..s.n)
        .filter(|&i| space.year(sim.states[i]) > space.year(sim.states[i - 1]))
        .map(|i| data.depths()[i])
        .collect();
    let year_of = |k: usize| space.year(k);
    let mut counts: Vec<usize> = chron
        .paths
        .iter()
        .map(|p| year_of(p[s.n - 1]) - year_of(p[0]))
        .collect();
    counts.sort_unstable();
    let q = |prob: f64| icechron::math::quantile_sorted(&counts, prob).unwrap_or(0);
    let times = chron.time_summaries();
    let result = DateResult {
        depths: data.depths().to_vec(),
        proxy: data.proxy().to_vec(),
        true_boundaries,
        true_years: year_of(sim.states[s.n - 1]) - year_of(sim.states[0]),
        years: [q(0.5), q(0.05), q(0.95)],
        layers: chron
            .layer_boundaries()
            .layers
            .iter()
            .map(|l| Layer {
                year: l.year,
                median: l.median_depth,
                q05: l.q05_depth,
                q95: l.q95_depth,
            })
            .collect(),
        time_q05: times.iter().map(|t| t.q05).collect(),
        time_q50: times.iter().map(|t| t.q50).collect(),
        time_q95: times.iter().map(|t| t.q95).collect(),
        a: fit.params.obs.a,
        b: fit.params.obs.b,
        sigma: fit.params.obs.sigma,
        p: fit.params.p.as_slice().to_vec(),
        loglik: fit.report.objective,
        converged: fit.report.converged,
    };
    Ok(serde_json::to_string(&result)?)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSettings {
    pub n: usize,
    pub n_s: usize,
    /// Phase advances per metre.
    pub rate: f64,
    pub sigma: f64,
    pub spacing: f64,
    /// Rows `cut_from..cut_to` are removed from the simulated core.
    pub cut_from: usize,
    pub cut_to: usize,
    /// Fit the rate and observation model to the gappy core instead of using
    /// the simulating values.
    pub fit: bool,
    pub seed: u64,
}

impl Default for GapSettings {
    fn default() -> Self {
        Self {
            n: 220,
            n_s: 4,
            rate: 4.0,
            sigma: 0.1,
            spacing: 0.05,
            cut_from: 90,
            cut_to: 120,
            fit: false,
            seed: 108,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GapResult {
    pub depths: Vec<f64>,
    pub proxy: Vec<f64>,
    pub gap_upper: f64,
    pub gap_lower: f64,
    /// `(years elapsed, probability)` across the removed section.
    pub elapsed: Vec<(i64, f64)>,
    pub true_elapsed: i64,
    pub mean_annual_depth: f64,
}

/// Posterior number of years inside a removed section of a simulated core.
pub fn gap_years(settings: &str) -> Result<String, DemoError> {
    let s: GapSettings = serde_json::from_str(settings)?;
    at_most("n", s.n, 3000)?;
    if !(s.cut_from >= 1 && s.cut_from < s.cut_to && s.cut_to < s.n) {
        return Err(DemoError::Limit(format!(
            "the cut {}..{} must lie strictly inside 0..{}",
            s.cut_from, s.cut_to, s.n
        )));
    }
    let rates = RateVector::constant(s.n_s, s.rate)?;
    let expected_years = s.n as f64 * s.spacing / rates.mean_annual_depth();
    let space = StateSpace::new(s.n_s, (2.0 * expected_years).ceil() as usize + 10)?;
    let obs = ObservationParams::new(1.0, 0.0, s.sigma)?;
    let sim = simulate_hmm(
        &space,
        &ChainSpec::Continuous(rates.clone()),
        &obs,
        &regular_depths(s.n, s.spacing),
        s.seed,
    )?;
    let gappy = sim.data.without(s.cut_from..s.cut_to);
    let log_init = space.default_log_init();
    let params = if s.fit {
        let init = initial_cts_params(&gappy, s.n_s, true)?;
        fit_mle_cts(&gappy, &space, &init, &log_init, &CtsOptions::default())?.params
    } else {
        CtsParams { obs, rates }
    };
    let upper = s.cut_from - 1;
    let (_, gaps) = gap_posterior(&gappy, &space, &params, &log_init, &[upper], 0, s.seed)?;
    let year = |i: usize| space.year(sim.states[i]) as i64;
    let result = GapResult {
        depths: gappy.depths().to_vec(),
        proxy: gappy.proxy().to_vec(),
        gap_upper: gappy.depths()[upper],
        gap_lower: gappy.depths()[upper + 1],
        elapsed: gaps[0].elapsed_years.clone(),
        true_elapsed: year(s.cut_to) - year(s.cut_from - 1),
        mean_annual_depth: params.rates.mean_annual_depth(),
    };
    Ok(serde_json::to_string(&result)?)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSettings {
    pub lambda: f64,
    pub alpha: f64,
    pub eps: f64,
    pub laplace_scale: f64,
    pub depth: f64,
    pub n_grid: usize,
    pub n_paths: usize,
    pub substeps: usize,
    pub form: SeasonalForm,
    pub seed: u64,
}

impl Default for SdeSettings {
    fn default() -> Self {
        let p = SdePriorParams::default();
        Self {
            lambda: p.lambda,
            alpha: p.alpha,
            eps: p.eps,
            laplace_scale: p.laplace_scale,
            depth: 10.0,
            n_grid: 500,
            n_paths: 20,
            substeps: 10,
            form: SeasonalForm::SinPi,
            seed: 3,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SdeResult {
    pub depths: Vec<f64>,
    /// Time against depth, one row per sampled path.
    pub times: Vec<Vec<f64>>,
    /// A synthetic proxy series driven by one further path.
    pub proxy: Vec<f64>,
    pub proxy_time: Vec<f64>,
}

/// Monotone depth-time paths from the latent SDE prior.
pub fn sde_paths(settings: &str) -> Result<String, DemoError> {
    let s: SdeSettings = serde_json::from_str(settings)?;
    at_most("n_grid", s.n_grid, 5000)?;
    at_most("n_paths", s.n_paths, 200)?;
    if s.n_grid < 2 || !(s.depth > 0.0) {
        return Err(DemoError::Limit(
            "need at least 2 grid points and a positive depth".into(),
        ));
    }
    let params = SdePriorParams {
        lambda: s.lambda,
        alpha: s.alpha,
        eps: s.eps,
        laplace_scale: s.laplace_scale,
    };
    let grid = regular_depths(s.n_grid, s.depth / (s.n_grid - 1) as f64);
    let paths = euler_maruyama(&params, &grid, s.n_paths, s.substeps, s.seed)?;
    let data = simulate_sde_dataset(&params, &grid, s.substeps, s.form, s.seed.wrapping_add(1))?;
    let result = SdeResult {
        depths: grid,
        times: paths.into_iter().map(|p| p.t).collect(),
        proxy: data.data.proxy().to_vec(),
        proxy_time: data.path.t,
    };
    Ok(serde_json::to_string(&result)?)
}

fn js(r: Result<String, DemoError>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = dateCore)]
pub fn date_core_js(settings: &str) -> Result<String, JsError> {
    js(date_core(settings))
}

#[wasm_bindgen(js_name = gapYears)]
pub fn gap_years_js(settings: &str) -> Result<String, JsError> {
    js(gap_years(settings))
}

#[wasm_bindgen(js_name = sdePaths)]
pub fn sde_paths_js(settings: &str) -> Result<String, JsError> {
    js(sde_paths(settings))
}
