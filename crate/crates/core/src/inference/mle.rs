//! Maximum likelihood for the basic model with the hidden chronology summed
//! out, plus batched fitting with state handoff between sections.

use web_time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::optim::{maximize, BfgsOptions};
use super::transform::{ParamLayout, Transform};
use super::FitReport;
use crate::error::{Error, Result};
use crate::hmm::stats::{emission_row_gradient, ExpectedCounts};
use crate::hmm::{
    Bidiagonal, Chronology, EmissionMatrix, ForwardPass, ObservationParams, Posterior, StateSpace,
    StayProbabilities, Transitions,
};
use crate::math::{mean_sd, rng_stream, NEG_INF};
use crate::series::DepthSeries;

/// Parameters of the basic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub obs: ObservationParams,
    pub p: StayProbabilities,
}

impl HmmParams {
    pub fn transitions(&self, space: &StateSpace) -> Result<Bidiagonal> {
        Bidiagonal::tiled(space, &self.p)
    }

    pub fn emissions(&self, data: &DepthSeries, space: &StateSpace) -> EmissionMatrix {
        EmissionMatrix::build(data, space, &self.obs)
    }
}

/// Gradient of the log-likelihood in constrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmGradient {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    /// One entry per phase slot.
    pub p: Vec<f64>,
}

/// Parameter blocks held at their initial values during optimization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedBlocks {
    #[serde(default)]
    pub a: bool,
    #[serde(default)]
    pub b: bool,
    #[serde(default)]
    pub sigma: bool,
    #[serde(default)]
    pub p: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleOptions {
    #[serde(default)]
    pub bfgs: BfgsOptions,
    #[serde(default)]
    pub fixed: FixedBlocks,
    /// Posterior paths drawn for the chronology.
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            bfgs: BfgsOptions::default(),
            fixed: FixedBlocks::default(),
            n_paths: 200,
            seed: 0,
        }
    }
}

/// Log-likelihood and its exact gradient from one forward-backward pass.
/// Returns `-inf` with a zero gradient when the data are infeasible.
pub fn loglik_gradient(
    data: &DepthSeries,
    space: &StateSpace,
    params: &HmmParams,
    log_init: &[f64],
) -> Result<(f64, HmmGradient)> {
    let em = params.emissions(data, space);
    let trans = params.transitions(space)?;
    let n_s = space.n_s();
    let fwd = ForwardPass::run(&em, &trans, log_init)?;
    let mut g = HmmGradient {
        a: 0.0,
        b: 0.0,
        sigma: 0.0,
        p: vec![0.0; n_s],
    };
    if !fwd.is_feasible() {
        return Ok((NEG_INF, g));
    }
    let ll = fwd.loglik();
    let post = Posterior::from_forward(fwd, &em, &trans)?;
    let counts = ExpectedCounts::collect(&post, &em, &trans, space);
    let o = &params.obs;
    for (i, &s) in data.proxy().iter().enumerate() {
        let (ga, gb, gs) = emission_row_gradient(s, o.a, o.b, o.sigma, &counts.phase_gamma[i]);
        g.a += ga;
        g.b += gb;
        g.sigma += gs;
    }
    let p = params.p.as_slice();
    for (k, gk) in counts
        .stay_gradient(|k| p[space.slot(k)])
        .into_iter()
        .enumerate()
    {
        g.p[space.slot(k)] += gk;
    }
    Ok((ll, g))
}

/// Dominant period of the series in samples, from a periodogram evaluated on
/// a geometric grid of candidate periods.
fn spectral_period(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 8 {
        return None;
    }
    let (mean, _) = mean_sd(x);
    let max_period = n as f64 / 3.0;
    if max_period <= 2.0 {
        return None;
    }
    let grid = 600;
    let ratio = (max_period / 2.0).ln() / (grid - 1) as f64;
    let mut best = (0.0, f64::NAN);
    for g in 0..grid {
        let period = 2.0 * (ratio * g as f64).exp();
        let w = std::f64::consts::TAU / period;
        let (mut re, mut im) = (0.0, 0.0);
        for (j, v) in x.iter().enumerate() {
            let (s, c) = (w * j as f64).sin_cos();
            re += (v - mean) * c;
            im += (v - mean) * s;
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, period);
        }
    }
    best.1.is_finite().then_some(best.1)
}

/// Data-driven starting point: `a = sd * sqrt 2`, `b = mean`, `sigma = sd/2`
/// and `p_j = 1 - n_s / E` where `E` is the spectral period in samples.
pub fn initial_params(data: &DepthSeries, n_s: usize) -> Result<HmmParams> {
    let (mean, sd) = mean_sd(data.proxy());
    let sd = if sd > 1e-12 * mean.abs().max(1.0) {
        sd
    } else {
        1.0
    };
    let period = spectral_period(data.proxy()).unwrap_or(2.0 * n_s as f64);
    let p = (1.0 - n_s as f64 / period).clamp(0.05, 0.95);
    debug!("spectral period {period:.2} samples/year, initial stay probability {p:.3}");
    Ok(HmmParams {
        obs: ObservationParams::new(sd * 2f64.sqrt(), mean, sd / 2.0)?,
        p: StayProbabilities::uniform(n_s, p)?,
    })
}

fn layout(n_s: usize) -> ParamLayout {
    let mut l = ParamLayout::new();
    l.push("a", 1, Transform::Identity);
    l.push("b", 1, Transform::Identity);
    l.push("sigma", 1, Transform::Log);
    l.push("p", n_s, Transform::Logit);
    l
}

fn flatten(params: &HmmParams) -> Vec<f64> {
    let mut x = vec![params.obs.a, params.obs.b, params.obs.sigma];
    x.extend_from_slice(params.p.as_slice());
    x
}

fn unflatten(x: &[f64]) -> Result<HmmParams> {
    Ok(HmmParams {
        obs: ObservationParams::new(x[0], x[1], x[2])?,
        p: StayProbabilities::new(x[3..].to_vec())?,
    })
}

fn free_mask(fixed: &FixedBlocks, n_s: usize) -> Vec<bool> {
    let mut m = vec![!fixed.a, !fixed.b, !fixed.sigma];
    m.extend(std::iter::repeat_n(!fixed.p, n_s));
    m
}

/// Result of [`fit_mle`].
#[derive(Debug, Clone)]
pub struct MleFit {
    pub params: HmmParams,
    pub report: FitReport,
}

/// Quasi-Newton maximum likelihood over `(a, b, log sigma, logit p)`.
pub fn fit_mle(
    data: &DepthSeries,
    space: &StateSpace,
    init: &HmmParams,
    log_init: &[f64],
    opts: &MleOptions,
) -> Result<MleFit> {
    let start = Instant::now();
    if data.is_empty() {
        return Err(Error::Input("no observations".into()));
    }
    init.obs.validate()?;
    let n_s = space.n_s();
    if init.p.len() != n_s {
        return Err(Error::param("p", format!("need {n_s} stay probabilities")));
    }
    let layout = layout(n_s);
    let z0 = layout.unconstrain(&flatten(init))?;
    let mask = free_mask(&opts.fixed, n_s);
    let free: Vec<usize> = (0..z0.len()).filter(|&i| mask[i]).collect();

    let objective = |zf: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut z = z0.clone();
        for (&i, &v) in free.iter().zip(zf) {
            z[i] = v;
        }
        let x = layout.constrain(&z);
        let params = match unflatten(&x) {
            Ok(p) => p,
            Err(_) => return Ok((NEG_INF, vec![0.0; zf.len()])),
        };
        let (ll, g) = loglik_gradient(data, space, &params, log_init)?;
        let mut gx = vec![g.a, g.b, g.sigma];
        gx.extend(g.p);
        let gz = layout.pull_back(&z, &gx, false);
        Ok((ll, free.iter().map(|&i| gz[i]).collect()))
    };

    let zf0: Vec<f64> = free.iter().map(|&i| z0[i]).collect();
    let (ll0, _) = objective(&zf0)?;
    if !ll0.is_finite() {
        let parameter = if !init.obs.sigma.is_normal() {
            "sigma"
        } else {
            "initial state distribution"
        };
        return Err(Error::NonFiniteInit {
            parameter: parameter.to_string(),
        });
    }

    let mut err = None;
    let result = maximize(
        |zf| match objective(zf) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                (NEG_INF, vec![0.0; zf.len()])
            }
        },
        &zf0,
        &opts.bfgs,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let mut z = z0.clone();
    for (&i, &v) in free.iter().zip(&result.x) {
        z[i] = v;
    }
    let x = layout.constrain(&z);
    let params = unflatten(&x)?;

    let mut report = FitReport::new("mle");
    report.objective = result.value;
    report.iterations = result.trace.len();
    report.trace = result.trace;
    report.converged = result.converged;
    for b in layout.blocks() {
        report.params.insert(b.name.clone(), x[b.range()].to_vec());
    }
    report.std_errors = standard_errors(&objective, &result.x, &free, &z, &layout);
    if !report.converged {
        warn!(
            "maximum likelihood did not converge in {} iterations",
            report.iterations
        );
        report.warnings.push("did not converge".into());
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(MleFit { params, report })
}

/// Standard errors via a finite-difference Hessian of the analytic gradient
/// over the free unconstrained coordinates, mapped back by the delta method.
fn standard_errors<F>(
    objective: &F,
    zf: &[f64],
    free: &[usize],
    z: &[f64],
    layout: &ParamLayout,
) -> Option<std::collections::BTreeMap<String, Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let d = zf.len();
    if d == 0 {
        return None;
    }
    let h = 1e-5;
    let mut hess = vec![vec![0.0; d]; d];
    for j in 0..d {
        let mut zp = zf.to_vec();
        let mut zm = zf.to_vec();
        zp[j] += h;
        zm[j] -= h;
        let (_, gp) = objective(&zp).ok()?;
        let (_, gm) = objective(&zm).ok()?;
        for i in 0..d {
            hess[i][j] = -(gp[i] - gm[i]) / (2.0 * h);
        }
    }
    // Symmetrize the observed information and invert by Cholesky.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (hess[i][j] + hess[j][i]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    let cov = spd_inverse(&hess)?;
    let mut out = std::collections::BTreeMap::new();
    for b in layout.blocks() {
        let t = b.transform;
        let se: Vec<f64> = b
            .range()
            .map(|i| match free.iter().position(|&f| f == i) {
                Some(pos) => cov[pos][pos].sqrt() * t.derivative(z[i]),
                None => 0.0,
            })
            .collect();
        out.insert(b.name.clone(), se);
    }
    Some(out)
}

/// Inverse of a symmetric positive-definite matrix, `None` otherwise.
pub(crate) fn spd_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i][i] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut inv = vec![vec![0.0; n]; n];
    for c in 0..n {
        // Solve L y = e_c, then L^T x = y.
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
            y[i] = ((if i == c { 1.0 } else { 0.0 }) - s) / l[i][i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k][i] * inv[k][c]).sum();
            inv[i][c] = (y[i] - s) / l[i][i];
        }
    }
    Some(inv)
}

/// Smoothed marginals plus `n_paths` exact posterior paths.
pub fn smoothed_chronology<T: Transitions>(
    data: &DepthSeries,
    space: &StateSpace,
    em: &EmissionMatrix,
    trans: &T,
    log_init: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<(Chronology, Posterior)> {
    let post = Posterior::run(em, trans, log_init)?;
    if !post.forward().is_feasible() {
        return Err(Error::Infeasible(
            "no state sequence is consistent with the data".into(),
        ));
    }
    let mut rng = rng_stream(seed, 0);
    let paths = post.forward().sample_paths(trans, n_paths, &mut rng)?;
    Ok((
        Chronology::from_posterior(*space, data.depths(), &post, paths),
        post,
    ))
}

/// Per-batch fits and the stitched chronology.
#[derive(Debug, Clone)]
pub struct BatchedFit {
    pub batches: Vec<std::ops::Range<usize>>,
    pub params: Vec<HmmParams>,
    pub reports: Vec<FitReport>,
    pub chronology: Chronology,
}

/// Contiguous batches of `batch_len`; a short tail is merged into the
/// preceding batch.
fn batch_ranges(n: usize, batch_len: usize, min_len: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_len).min(n);
        out.push(start..end);
        start = end;
    }
    if out.len() > 1 && out.last().map(|r| r.len()).unwrap_or(0) < min_len {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").end = tail.end;
    }
    out
}

fn is_flat(x: &[f64]) -> bool {
    let (mean, sd) = mean_sd(x);
    sd <= 1e-12 * mean.abs().max(1.0)
}

/// Fits contiguous batches in turn. Batch `r + 1` starts from the final
/// smoothed marginal of batch `r` propagated one step through batch `r`'s
/// transition, and paths are stitched by sampling each batch conditioned on
/// the first state of the next one.
pub fn fit_batched(
    data: &DepthSeries,
    space: &StateSpace,
    init: &HmmParams,
    batch_len: usize,
    opts: &MleOptions,
) -> Result<BatchedFit> {
    let n_s = space.n_s();
    if batch_len < 2 * n_s {
        return Err(Error::Config(format!(
            "batch length {batch_len} is below 2 * n_s = {}",
            2 * n_s
        )));
    }
    let ranges = batch_ranges(data.len(), batch_len, 2 * n_s);
    let k_total = space.total_states();
    let mut log_init = space.default_log_init();
    let mut current = init.clone();
    let mut params = Vec::new();
    let mut reports = Vec::new();
    let mut stored = Vec::new();

    for (r, range) in ranges.iter().enumerate() {
        let batch = data.slice(range.clone());
        let report = if is_flat(batch.proxy()) {
            warn!("batch {r} has a flat proxy; parameters carried over");
            let mut rep = FitReport::new("mle");
            rep.weakly_identified = true;
            rep.warnings
                .push("flat proxy: parameters are not identified".into());
            rep
        } else {
            let fit = fit_mle(&batch, space, &current, &log_init, opts)?;
            current = fit.params;
            fit.report
        };
        let em = current.emissions(&batch, space);
        let trans = current.transitions(space)?;
        let post = Posterior::run(&em, &trans, &log_init)?;
        if !post.forward().is_feasible() {
            return Err(Error::Infeasible(format!("batch {r} is infeasible")));
        }
        // Handoff: push the final smoothed marginal through one transition.
        let last = post.gamma_row(batch.len() - 1);
        let mut next = vec![0.0; k_total];
        for k in last.range() {
            let w = last.vals[k - last.lo];
            let (ls, la) = trans.stay_advance(k);
            next[k] += w * ls.exp();
            if k + 1 < k_total {
                next[k + 1] += w * la.exp();
            }
        }
        let total: f64 = next.iter().sum();
        log_init = next.iter().map(|v| (v / total).ln()).collect();
        params.push(current.clone());
        let mut rep = report;
        if rep.weakly_identified {
            rep.objective = post.loglik();
            for (name, v) in [
                ("a", vec![current.obs.a]),
                ("b", vec![current.obs.b]),
                ("sigma", vec![current.obs.sigma]),
                ("p", current.p.as_slice().to_vec()),
            ] {
                rep.params.insert(name.into(), v);
            }
        }
        reports.push(rep);
        stored.push((batch, em, trans, post));
    }

    // Stitch: last batch first, each earlier batch conditioned on the next.
    let mut rng = rng_stream(opts.seed, 1);
    let n_b = stored.len();
    let mut batch_paths: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n_b];
    for _ in 0..opts.n_paths {
        let mut next_first = None;
        for r in (0..n_b).rev() {
            let (_, _, trans, post) = &stored[r];
            let path = post.forward().sample_path(trans, next_first, &mut rng)?;
            next_first = Some(path[0]);
            batch_paths[r].push(path);
        }
    }
    let parts = stored
        .iter()
        .zip(batch_paths)
        .map(|((batch, _, _, post), paths)| {
            Chronology::from_posterior(*space, batch.depths(), post, paths)
        })
        .collect();
    Ok(BatchedFit {
        batches: ranges,
        params,
        reports,
        chronology: Chronology::concat(parts)?,
    })
}
