//! Continuous-index chain: a pure-birth generator over the state lattice and
//! depth-gap transition kernels `exp(gap * Q)` computed by uniformization on
//! banded rows, with derivatives with respect to the log-rates.

use std::collections::HashMap;
use web_time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::stats::{emission_row_gradient, ExpectedCounts};
use crate::hmm::{
    Chronology, EmissionMatrix, ForwardPass, ObservationParams, Posterior, StateSpace, Transitions,
};
use crate::inference::{maximize, BfgsOptions, FitReport, ParamLayout, Transform};
use crate::math::{rng_stream, NEG_INF};
use crate::series::DepthSeries;

/// Default truncation of trailing band entries.
pub const BAND_TOL: f64 = 1e-12;
/// Largest `gap * max rate` handled by a single uniformization series.
const MAX_SERIES_SPAN: f64 = 10.0;
/// Beyond this `gap * max rate` the kernel is refused.
const MAX_TOTAL_SPAN: f64 = 1e5;

/// Advance rates per unit depth (1/m), one per phase slot or one shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector {
    q: Vec<f64>,
    #[serde(default)]
    constant: bool,
}

impl RateVector {
    pub fn per_phase(q: Vec<f64>) -> Result<Self> {
        Self::validated(q, false)
    }

    pub fn constant(n_s: usize, q: f64) -> Result<Self> {
        Self::validated(vec![q; n_s], true)
    }

    fn validated(q: Vec<f64>, constant: bool) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::param("q", "needs at least one phase"));
        }
        if let Some(j) = q.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::param(
                format!("q[{j}]"),
                format!("rate must be > 0, got {}", q[j]),
            ));
        }
        Ok(Self { q, constant })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn max(&self) -> f64 {
        self.q.iter().copied().fold(0.0, f64::max)
    }

    /// Expected depth spanned by one year.
    pub fn mean_annual_depth(&self) -> f64 {
        self.q.iter().map(|v| 1.0 / v).sum()
    }

    /// All rates multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::validated(self.q.iter().map(|v| v * c).collect(), self.constant)
    }

    /// Dense generator, for small instances and tests.
    pub fn generator(&self, space: &StateSpace) -> Vec<Vec<f64>> {
        let k = space.total_states();
        let mut g = vec![vec![0.0; k]; k];
        for i in 0..k.saturating_sub(1) {
            let r = self.q[space.slot(i)];
            g[i][i] = -r;
            g[i][i + 1] = r;
        }
        g
    }
}

/// Rows of a banded upper-triangular matrix. Row `k` starts on the diagonal.
/// Rows far from the absorbing end depend only on the phase slot of `k` and
/// are stored once per slot; the last rows are stored individually.
#[derive(Debug, Clone, PartialEq)]
struct BandRows {
    n_s: usize,
    n_states: usize,
    templates: Vec<Vec<f64>>,
    tail_start: usize,
    tail: Vec<Vec<f64>>,
}

impl BandRows {
    #[inline]
    fn row(&self, k: usize) -> &[f64] {
        if k >= self.tail_start {
            &self.tail[k - self.tail_start]
        } else {
            &self.templates[k % self.n_s]
        }
    }

    fn band(&self) -> usize {
        self.templates
            .iter()
            .chain(&self.tail)
            .map(|r| r.len().saturating_sub(1))
            .max()
            .unwrap_or(0)
    }
}

/// Row `k`'s slot equals `k % n_s` (see [`StateSpace::slot`]); kernels use
/// this directly so templates can be indexed without the space.
fn slot_of(k: usize, n_s: usize) -> usize {
    k % n_s
}

/// Uniformization series for one row started at `start` on a chain with
/// `limit` states after `start` (`None` = unbounded), returning the row and
/// its derivatives w.r.t. each rate slot.
fn series_row(
    rates: &[f64],
    lambda: f64,
    span: f64,
    start: usize,
    limit: Option<usize>,
    with_deriv: bool,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n_s = rates.len();
    // Poisson weights e^{-span} span^m / m!.
    let mut weights = Vec::new();
    let mut w = (-span).exp();
    let mut m = 0usize;
    loop {
        weights.push(w);
        m += 1;
        w *= span / m as f64;
        if (m as f64 > span && w < 1e-18) || m > 10_000 {
            break;
        }
    }
    let terms = weights.len();
    let max_len = match limit {
        Some(l) => l.min(terms),
        None => terms,
    };
    // Offset i is absorbing iff it is the final state.
    let rate_at = |i: usize| -> f64 {
        match limit {
            Some(l) if i + 1 == l => 0.0,
            _ => rates[slot_of(start + i, n_s)],
        }
    };
    let mut v = vec![0.0; max_len];
    v[0] = 1.0;
    let mut dv = if with_deriv {
        vec![vec![0.0; max_len]; n_s]
    } else {
        Vec::new()
    };
    let mut row = vec![0.0; max_len];
    let mut drow = vec![vec![0.0; max_len]; dv.len()];
    let mut width = 1;
    for (m, &pw) in weights.iter().enumerate() {
        for i in 0..width {
            row[i] += pw * v[i];
        }
        for (d, r) in dv.iter().zip(drow.iter_mut()) {
            for i in 0..width {
                r[i] += pw * d[i];
            }
        }
        if m + 1 == terms {
            break;
        }
        let new_width = (width + 1).min(max_len);
        // w' = w U + v dU_j, using the old v; then v' = v U.
        if with_deriv {
            for (j, d) in dv.iter_mut().enumerate() {
                for i in (0..new_width).rev() {
                    let mut acc = 0.0;
                    if i < width {
                        let r = rate_at(i);
                        acc += d[i] * (1.0 - r / lambda);
                        if r > 0.0 && slot_of(start + i, n_s) == j {
                            acc -= v[i] / lambda;
                        }
                    }
                    if i >= 1 && i - 1 < width {
                        let r = rate_at(i - 1);
                        acc += d[i - 1] * r / lambda;
                        if r > 0.0 && slot_of(start + i - 1, n_s) == j {
                            acc += v[i - 1] / lambda;
                        }
                    }
                    d[i] = acc;
                }
            }
        }
        for i in (0..new_width).rev() {
            let mut acc = 0.0;
            if i < width {
                acc += v[i] * (1.0 - rate_at(i) / lambda);
            }
            if i >= 1 && i - 1 < width {
                acc += v[i - 1] * rate_at(i - 1) / lambda;
            }
            v[i] = acc;
        }
        width = new_width;
    }
    (row, drow)
}

/// Drops trailing entries below `tol` and renormalizes (value and
/// derivatives consistently).
fn truncate_row(row: &mut Vec<f64>, drow: &mut [Vec<f64>], tol: f64) {
    let keep = row.iter().rposition(|&x| x >= tol).map_or(1, |p| p + 1);
    row.truncate(keep);
    for d in drow.iter_mut() {
        d.truncate(keep);
    }
    let s: f64 = row.iter().sum();
    let ds: Vec<f64> = drow.iter().map(|d| d.iter().sum()).collect();
    for (j, d) in drow.iter_mut().enumerate() {
        for (x, &r) in d.iter_mut().zip(row.iter()) {
            *x = *x / s - r * ds[j] / (s * s);
        }
    }
    for x in row.iter_mut() {
        *x /= s;
    }
}

/// Transition kernel `exp(gap * Q)` in banded form.
#[derive(Debug, Clone, PartialEq)]
pub struct GapKernel {
    gap: f64,
    rows: BandRows,
    log_rows: BandRows,
    /// `d P / d log q_j`, one banded matrix per rate slot.
    derivs: Vec<BandRows>,
}

struct Built {
    rows: BandRows,
    derivs: Vec<BandRows>,
}

fn build_single(
    rates: &[f64],
    n_states: usize,
    span_rate: f64,
    gap: f64,
    tol: f64,
    with_deriv: bool,
) -> Built {
    let n_s = rates.len();
    let span = span_rate * gap;
    let mut templates = Vec::with_capacity(n_s);
    let mut dtemplates: Vec<Vec<Vec<f64>>> =
        vec![Vec::with_capacity(n_s); if with_deriv { n_s } else { 0 }];
    for j in 0..n_s {
        let (mut r, mut d) = series_row(rates, span_rate, span, j, None, with_deriv);
        truncate_row(&mut r, &mut d, tol);
        templates.push(r);
        for (l, dl) in d.into_iter().enumerate() {
            dtemplates[l].push(dl);
        }
    }
    let band = templates.iter().map(|r| r.len() - 1).max().unwrap_or(0);
    // Rows whose band could reach the final state are computed exactly.
    let tail_start = n_states.saturating_sub(band + 1);
    let mut tail = Vec::new();
    let mut dtail: Vec<Vec<Vec<f64>>> = vec![Vec::new(); dtemplates.len()];
    for k in tail_start..n_states {
        let (mut r, mut d) = series_row(rates, span_rate, span, k, Some(n_states - k), with_deriv);
        truncate_row(&mut r, &mut d, tol);
        tail.push(r);
        for (l, dl) in d.into_iter().enumerate() {
            dtail[l].push(dl);
        }
    }
    let mk = |templates, tail| BandRows {
        n_s,
        n_states,
        templates,
        tail_start,
        tail,
    };
    let derivs = dtemplates
        .into_iter()
        .zip(dtail)
        .map(|(t, tl)| mk(t, tl))
        .collect();
    Built {
        rows: mk(templates, tail),
        derivs,
    }
}

/// Banded product `A B` with the product rule applied to derivatives.
fn compose(a: &Built, b: &Built, tol: f64) -> Built {
    let n_s = a.rows.n_s;
    let n_states = a.rows.n_states;
    let band = a.rows.band() + b.rows.band();
    let tail_start = n_states.saturating_sub(band + 1);
    let n_d = a.derivs.len();
    let row_product = |k: usize| -> (Vec<f64>, Vec<Vec<f64>>) {
        let ra = a.rows.row(k);
        let width = (band + 1).min(n_states - k);
        let mut out = vec![0.0; width];
        let mut dout = vec![vec![0.0; width]; n_d];
        for (i, &x) in ra.iter().enumerate() {
            let rb = b.rows.row(k + i);
            for (j, &y) in rb.iter().enumerate() {
                if i + j < width {
                    out[i + j] += x * y;
                }
            }
            for l in 0..n_d {
                let dra = a.derivs[l].row(k);
                let drb = b.derivs[l].row(k + i);
                for j in 0..rb.len() {
                    if i + j < width {
                        dout[l][i + j] += dra[i] * rb[j] + x * drb[j];
                    }
                }
            }
        }
        truncate_row(&mut out, &mut dout, tol);
        (out, dout)
    };
    let mut templates = Vec::with_capacity(n_s);
    let mut dtemplates: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_d];
    // Interior rows: any state with the right slot far from the end. If the
    // chain is too short, every row is in the tail and templates go unused.
    for j in 0..n_s {
        if j < tail_start {
            let (r, d) = row_product(j);
            templates.push(r);
            for (l, dl) in d.into_iter().enumerate() {
                dtemplates[l].push(dl);
            }
        } else {
            templates.push(vec![1.0]);
            for dl in dtemplates.iter_mut() {
                dl.push(vec![0.0]);
            }
        }
    }
    let mut tail = Vec::new();
    let mut dtail: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_d];
    for k in tail_start..n_states {
        let (r, d) = row_product(k);
        tail.push(r);
        for (l, dl) in d.into_iter().enumerate() {
            dtail[l].push(dl);
        }
    }
    let mk = |templates, tail| BandRows {
        n_s,
        n_states,
        templates,
        tail_start,
        tail,
    };
    Built {
        rows: mk(templates, tail),
        derivs: dtemplates
            .into_iter()
            .zip(dtail)
            .map(|(t, tl)| mk(t, tl))
            .collect(),
    }
}

impl GapKernel {
    /// `exp(gap * Q)` with trailing entries below `band_tol` truncated.
    pub fn new(rates: &RateVector, space: &StateSpace, gap: f64, band_tol: f64) -> Result<Self> {
        Self::build(rates, space, gap, band_tol, false)
    }

    /// As [`new`](Self::new), also computing derivatives w.r.t. `log q_j`.
    pub fn with_derivatives(
        rates: &RateVector,
        space: &StateSpace,
        gap: f64,
        band_tol: f64,
    ) -> Result<Self> {
        Self::build(rates, space, gap, band_tol, true)
    }

    fn build(
        rates: &RateVector,
        space: &StateSpace,
        gap: f64,
        band_tol: f64,
        with_deriv: bool,
    ) -> Result<Self> {
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(Error::param(
                "gap",
                format!("depth gap must be > 0, got {gap}"),
            ));
        }
        if rates.len() != space.n_s() {
            return Err(Error::param(
                "q",
                format!("expected {} rates, got {}", space.n_s(), rates.len()),
            ));
        }
        let lambda = rates.max();
        let total = lambda * gap;
        if total > MAX_TOTAL_SPAN {
            return Err(Error::Config(format!(
                "gap of {gap} m spans about {total:.0} expected transitions; \
                 split the record at this gap instead"
            )));
        }
        let substeps = (total / MAX_SERIES_SPAN).ceil().max(1.0) as usize;
        let h = gap / substeps as f64;
        let n_states = space.total_states();
        let single = build_single(rates.as_slice(), n_states, lambda, h, band_tol, with_deriv);
        let built = power(single, substeps, band_tol);
        let mut derivs = built.derivs;
        // Chain rule to log-rates: dP/dlog q_j = q_j dP/dq_j.
        for (j, d) in derivs.iter_mut().enumerate() {
            let qj = rates.as_slice()[j];
            for r in d.templates.iter_mut().chain(d.tail.iter_mut()) {
                r.iter_mut().for_each(|x| *x *= qj);
            }
        }
        let log_rows = BandRows {
            templates: built.rows.templates.iter().map(|r| log_vec(r)).collect(),
            tail: built.rows.tail.iter().map(|r| log_vec(r)).collect(),
            ..built.rows.clone()
        };
        Ok(Self {
            gap,
            rows: built.rows,
            log_rows,
            derivs,
        })
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn n_states(&self) -> usize {
        self.rows.n_states
    }

    pub fn band(&self) -> usize {
        self.rows.band()
    }

    /// Row `k` from the diagonal onward: entry `j` is `P(k, k + j)`.
    pub fn row(&self, k: usize) -> &[f64] {
        self.rows.row(k)
    }

    pub fn log_row(&self, k: usize) -> &[f64] {
        self.log_rows.row(k)
    }

    /// `P(k, l)`, zero outside the band.
    pub fn get(&self, k: usize, l: usize) -> f64 {
        if l < k {
            return 0.0;
        }
        self.row(k).get(l - k).copied().unwrap_or(0.0)
    }

    /// `dP(k, k + j) / d log q_slot` for one row, if derivatives were built.
    pub fn deriv_row(&self, slot: usize, k: usize) -> Option<&[f64]> {
        self.derivs.get(slot).map(|d| d.row(k))
    }

    pub fn has_derivatives(&self) -> bool {
        !self.derivs.is_empty()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let k = self.n_states();
        (0..k)
            .map(|i| (0..k).map(|l| self.get(i, l)).collect())
            .collect()
    }
}

fn log_vec(r: &[f64]) -> Vec<f64> {
    r.iter()
        .map(|&x| if x > 0.0 { x.ln() } else { NEG_INF })
        .collect()
}

fn power(base: Built, mut e: usize, tol: f64) -> Built {
    let mut result: Option<Built> = None;
    let mut b = base;
    loop {
        if e & 1 == 1 {
            result = Some(match result {
                None => Built {
                    rows: b.rows.clone(),
                    derivs: b.derivs.clone(),
                },
                Some(r) => compose(&r, &b, tol),
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        b = compose(&b, &b, tol);
    }
    result.expect("exponent is at least one")
}

/// Transitions between irregularly spaced depths. Step `i` uses the kernel
/// of gap `depths[i] - depths[i - 1]`; kernels are shared between equal gaps.
#[derive(Debug, Clone)]
pub struct CtsTransitions {
    kernels: Vec<GapKernel>,
    step_kernel: Vec<usize>,
    n_states: usize,
}

/// Gaps equal to about 11 significant digits share a kernel.
fn gap_key(gap: f64) -> i64 {
    (gap.ln() * 1e11).round() as i64
}

impl CtsTransitions {
    pub fn new(
        rates: &RateVector,
        space: &StateSpace,
        depths: &[f64],
        with_derivatives: bool,
    ) -> Result<Self> {
        let mut cache: HashMap<i64, usize> = HashMap::new();
        let mut gaps = Vec::new();
        let mut step_kernel = vec![0usize; depths.len()];
        for i in 1..depths.len() {
            let gap = depths[i] - depths[i - 1];
            if !(gap > 0.0) {
                return Err(Error::Input(format!(
                    "depths must be strictly increasing (rows {} and {i})",
                    i - 1
                )));
            }
            let idx = *cache.entry(gap_key(gap)).or_insert_with(|| {
                gaps.push(gap);
                gaps.len() - 1
            });
            step_kernel[i] = idx;
        }
        use rayon::prelude::*;
        let kernels = gaps
            .par_iter()
            .map(|&g| GapKernel::build(rates, space, g, BAND_TOL, with_derivatives))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernels,
            step_kernel,
            n_states: space.total_states(),
        })
    }

    pub fn kernel(&self, step: usize) -> &GapKernel {
        &self.kernels[self.step_kernel[step]]
    }

    pub fn n_kernels(&self) -> usize {
        self.kernels.len()
    }
}

impl Transitions for CtsTransitions {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn max_jump(&self, step: usize) -> usize {
        if step == 0 || step >= self.step_kernel.len() {
            // A step past the data (used when conditioning) has no kernel.
            return 0;
        }
        self.kernel(step).band()
    }

    #[inline]
    fn log_prob(&self, step: usize, from: usize, jump: usize) -> f64 {
        if step == 0 || step >= self.step_kernel.len() {
            return if jump == 0 { 0.0 } else { NEG_INF };
        }
        self.kernel(step)
            .log_row(from)
            .get(jump)
            .copied()
            .unwrap_or(NEG_INF)
    }
}

/// Parameters of the continuous-index model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtsParams {
    pub obs: ObservationParams,
    pub rates: RateVector,
}

/// Forward log-likelihood with gap-dependent kernels.
pub fn forward_loglik_inhomogeneous(
    emissions: &EmissionMatrix,
    rates: &RateVector,
    space: &StateSpace,
    depths: &[f64],
    log_init: &[f64],
) -> Result<f64> {
    if depths.len() != emissions.n_rows() {
        return Err(Error::Input(
            "one depth per emission row is required".into(),
        ));
    }
    let trans = CtsTransitions::new(rates, space, depths, false)?;
    Ok(ForwardPass::run(emissions, &trans, log_init)?.loglik())
}

/// Gradient of the continuous-index log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CtsGradient {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    /// With respect to `log q_j`.
    pub log_q: Vec<f64>,
}

/// Log-likelihood and its gradient; derivatives of the kernels come from
/// differentiating the uniformization series.
pub fn cts_loglik_gradient(
    data: &DepthSeries,
    space: &StateSpace,
    params: &CtsParams,
    log_init: &[f64],
) -> Result<(f64, CtsGradient)> {
    let em = EmissionMatrix::build(data, space, &params.obs);
    let trans = CtsTransitions::new(&params.rates, space, data.depths(), true)?;
    let n_s = space.n_s();
    let fwd = ForwardPass::run(&em, &trans, log_init)?;
    let mut g = CtsGradient {
        a: 0.0,
        b: 0.0,
        sigma: 0.0,
        log_q: vec![0.0; n_s],
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
    post.for_each_pair(&em, &trans, |step, k, jump, log_w| {
        let w = log_w.exp();
        if w == 0.0 {
            return;
        }
        let kern = trans.kernel(step);
        for (j, gj) in g.log_q.iter_mut().enumerate() {
            let d = kern.deriv_row(j, k).expect("built with derivatives");
            if let Some(&v) = d.get(jump) {
                *gj += w * v;
            }
        }
    });
    Ok((ll, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtsOptions {
    #[serde(default)]
    pub bfgs: BfgsOptions,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for CtsOptions {
    fn default() -> Self {
        Self {
            bfgs: BfgsOptions::default(),
            n_paths: 200,
            seed: 0,
        }
    }
}

/// Starting point from moments and the spectral period: the rates make the
/// expected annual depth equal to the dominant period times the median
/// spacing.
pub fn initial_cts_params(data: &DepthSeries, n_s: usize, constant: bool) -> Result<CtsParams> {
    let base = crate::inference::initial_params(data, n_s)?;
    let spacing = data.median_spacing().unwrap_or(1.0);
    let p = base.p.as_slice()[0];
    let samples_per_year = n_s as f64 / (1.0 - p);
    let q = n_s as f64 / (samples_per_year * spacing);
    let rates = if constant {
        RateVector::constant(n_s, q)?
    } else {
        RateVector::per_phase(vec![q; n_s])?
    };
    Ok(CtsParams {
        obs: base.obs,
        rates,
    })
}

#[derive(Debug, Clone)]
pub struct CtsFit {
    pub params: CtsParams,
    pub report: FitReport,
}

/// Maximum likelihood over `(a, b, log sigma, log q)`.
pub fn fit_mle_cts(
    data: &DepthSeries,
    space: &StateSpace,
    init: &CtsParams,
    log_init: &[f64],
    opts: &CtsOptions,
) -> Result<CtsFit> {
    let start = Instant::now();
    if data.is_empty() {
        return Err(Error::Input("no observations".into()));
    }
    init.obs.validate()?;
    let n_s = space.n_s();
    let constant = init.rates.is_constant();
    let n_q = if constant { 1 } else { n_s };
    let mut layout = ParamLayout::new();
    layout.push("a", 1, Transform::Identity);
    layout.push("b", 1, Transform::Identity);
    layout.push("sigma", 1, Transform::Log);
    layout.push("q", n_q, Transform::Log);
    let mut x0 = vec![init.obs.a, init.obs.b, init.obs.sigma];
    x0.extend_from_slice(&init.rates.as_slice()[..n_q]);
    let z0 = layout.unconstrain(&x0)?;

    let decode = |z: &[f64]| -> Result<CtsParams> {
        let x = layout.constrain(z);
        let rates = if constant {
            RateVector::constant(n_s, x[3])?
        } else {
            RateVector::per_phase(x[3..].to_vec())?
        };
        Ok(CtsParams {
            obs: ObservationParams::new(x[0], x[1], x[2])?,
            rates,
        })
    };
    let objective = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let params = match decode(z) {
            Ok(p) => p,
            Err(_) => return Ok((NEG_INF, vec![0.0; z.len()])),
        };
        let (ll, g) = match cts_loglik_gradient(data, space, &params, log_init) {
            Ok(v) => v,
            Err(Error::Config(_)) => return Ok((NEG_INF, vec![0.0; z.len()])),
            Err(e) => return Err(e),
        };
        let mut gz = vec![g.a, g.b, g.sigma * params.obs.sigma];
        if constant {
            gz.push(g.log_q.iter().sum());
        } else {
            gz.extend(g.log_q);
        }
        Ok((ll, gz))
    };
    let (ll0, _) = objective(&z0)?;
    if !ll0.is_finite() {
        return Err(Error::NonFiniteInit {
            parameter: "initial state distribution".into(),
        });
    }
    let mut err = None;
    let result = maximize(
        |z| match objective(z) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                (NEG_INF, vec![0.0; z.len()])
            }
        },
        &z0,
        &opts.bfgs,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let params = decode(&result.x)?;
    let mut report = FitReport::new("mle-cts");
    report.objective = result.value;
    report.iterations = result.trace.len();
    report.trace = result.trace;
    report.converged = result.converged;
    let x = layout.constrain(&result.x);
    for b in layout.blocks() {
        report.params.insert(b.name.clone(), x[b.range()].to_vec());
    }
    report.params.insert(
        "mean_annual_depth".into(),
        vec![params.rates.mean_annual_depth()],
    );
    if !report.converged {
        warn!("continuous-index fit did not converge");
        report.warnings.push("did not converge".into());
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(CtsFit { params, report })
}

/// Posterior across one gap between rows `gap_index` and `gap_index + 1`.
#[derive(Debug, Clone)]
pub struct GapPosterior {
    pub gap_index: usize,
    pub gap_depth: f64,
    /// `(years elapsed, probability)`, exact from the joint endpoint law.
    pub elapsed_years: Vec<(i64, f64)>,
}

/// Smoothed chronology of irregularly spaced data plus, for each gap, the
/// exact posterior of the number of years elapsed across it.
pub fn gap_posterior(
    data: &DepthSeries,
    space: &StateSpace,
    params: &CtsParams,
    log_init: &[f64],
    gap_indices: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<(Chronology, Vec<GapPosterior>)> {
    let em = EmissionMatrix::build(data, space, &params.obs);
    let trans = CtsTransitions::new(&params.rates, space, data.depths(), false)?;
    let post = Posterior::run(&em, &trans, log_init)?;
    let mut gaps = Vec::new();
    for &i in gap_indices {
        if i + 1 >= data.len() {
            return Err(Error::Input(format!("gap index {i} is out of range")));
        }
        let mut dist = std::collections::BTreeMap::new();
        for (k, l, p) in post.joint_endpoints(&em, &trans, i, i + 1)? {
            let d = space.year(l) as i64 - space.year(k) as i64;
            *dist.entry(d).or_insert(0.0) += p;
        }
        gaps.push(GapPosterior {
            gap_index: i,
            gap_depth: data.depths()[i + 1] - data.depths()[i],
            elapsed_years: dist.into_iter().collect(),
        });
    }
    let mut rng = rng_stream(seed, 0);
    let paths = post.forward().sample_paths(&trans, n_paths, &mut rng)?;
    Ok((
        Chronology::from_posterior(*space, data.depths(), &post, paths),
        gaps,
    ))
}
