use serde::{Deserialize, Serialize};

use super::engine::{LogWindow, Posterior};
use super::space::StateSpace;
use crate::error::{Error, Result};
use crate::math::quantile_sorted;

/// Posterior summary of time (years) at one depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Posterior over the depth-to-time mapping: smoothed state marginals per
/// depth plus sampled monotone state paths.
#[derive(Debug, Clone)]
pub struct Chronology {
    pub space: StateSpace,
    pub depths: Vec<f64>,
    /// Probabilities (not logs) over a window of states, one per depth.
    pub gamma: Vec<LogWindow>,
    pub paths: Vec<Vec<usize>>,
}

impl Chronology {
    pub fn from_posterior(
        space: StateSpace,
        depths: &[f64],
        post: &Posterior,
        paths: Vec<Vec<usize>>,
    ) -> Self {
        let gamma = (0..post.n_obs())
            .map(|i| post.gamma_row(i).clone())
            .collect();
        Self {
            space,
            depths: depths.to_vec(),
            gamma,
            paths,
        }
    }

    /// Concatenates chronologies of consecutive depth sections that share a
    /// state space and whose paths line up one-to-one.
    pub fn concat(parts: Vec<Chronology>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let mut out = iter
            .next()
            .ok_or_else(|| Error::Input("nothing to concatenate".into()))?;
        for part in iter {
            if part.space != out.space || part.paths.len() != out.paths.len() {
                return Err(Error::Input("chronology sections do not line up".into()));
            }
            out.depths.extend(part.depths);
            out.gamma.extend(part.gamma);
            for (p, q) in out.paths.iter_mut().zip(part.paths) {
                p.extend(q);
            }
        }
        Ok(out)
    }

    /// Equal-weight mixture over posteriors of the same data (e.g. one per
    /// parameter draw). Paths are pooled.
    pub fn mixture(parts: Vec<Chronology>) -> Result<Self> {
        let n_parts = parts.len();
        let first = parts
            .first()
            .ok_or_else(|| Error::Input("empty mixture".into()))?;
        let (space, depths) = (first.space, first.depths.clone());
        if parts.iter().any(|p| p.space != space || p.depths != depths) {
            return Err(Error::Input("mixture components disagree on data".into()));
        }
        let mut gamma = Vec::with_capacity(depths.len());
        for i in 0..depths.len() {
            let lo = parts.iter().map(|p| p.gamma[i].lo).min().unwrap_or(0);
            let hi = parts.iter().map(|p| p.gamma[i].hi()).max().unwrap_or(0);
            let mut vals = vec![0.0; hi - lo];
            for p in &parts {
                let w = &p.gamma[i];
                for k in w.range() {
                    vals[k - lo] += w.vals[k - w.lo] / n_parts as f64;
                }
            }
            gamma.push(LogWindow { lo, vals });
        }
        let paths = parts.into_iter().flat_map(|p| p.paths).collect();
        Ok(Self {
            space,
            depths,
            gamma,
            paths,
        })
    }

    pub fn gamma(&self, i: usize, k: usize) -> f64 {
        let w = &self.gamma[i];
        if k >= w.lo && k < w.hi() {
            w.vals[k - w.lo]
        } else {
            0.0
        }
    }

    /// Mean and quantiles of time per depth, from the smoothed marginals.
    pub fn time_summaries(&self) -> Vec<TimeSummary> {
        self.gamma
            .iter()
            .map(|w| {
                let total: f64 = w.vals.iter().sum();
                let mean = w
                    .range()
                    .map(|k| w.vals[k - w.lo] * self.space.time(k))
                    .sum::<f64>()
                    / total;
                let q = |p: f64| {
                    let mut acc = 0.0;
                    for k in w.range() {
                        acc += w.vals[k - w.lo] / total;
                        if acc >= p - 1e-12 {
                            return self.space.time(k);
                        }
                    }
                    self.space.time(w.hi() - 1)
                };
                TimeSummary {
                    mean,
                    q05: q(0.05),
                    q50: q(0.5),
                    q95: q(0.95),
                }
            })
            .collect()
    }

    /// Posterior of `year(state_j) - year(state_i)` estimated from the paths.
    pub fn elapsed_years_from_paths(&self, i: usize, j: usize) -> Vec<(i64, f64)> {
        let mut counts = std::collections::BTreeMap::new();
        for p in &self.paths {
            let d = self.space.year(p[j]) as i64 - self.space.year(p[i]) as i64;
            *counts.entry(d).or_insert(0usize) += 1;
        }
        let n = self.paths.len() as f64;
        counts.into_iter().map(|(d, c)| (d, c as f64 / n)).collect()
    }

    pub fn layer_boundaries(&self) -> LayerReport {
        layer_boundaries(&self.paths, &self.space, &self.depths)
    }

    /// Checks the structural invariants: normalized marginals and monotone
    /// paths with unit steps (for bidiagonal chains `max_step = 1`).
    pub fn check(&self, max_step: usize) -> Result<()> {
        for (i, w) in self.gamma.iter().enumerate() {
            let s: f64 = w.vals.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Inference(format!(
                    "smoothed marginals at row {i} sum to {s}"
                )));
            }
        }
        for (p_id, p) in self.paths.iter().enumerate() {
            if p.len() != self.depths.len() {
                return Err(Error::Inference(format!(
                    "path {p_id} has the wrong length"
                )));
            }
            if let Some(i) = p
                .windows(2)
                .position(|w| w[1] < w[0] || w[1] - w[0] > max_step)
            {
                return Err(Error::Inference(format!(
                    "path {p_id} is not monotone at step {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Depth interval for the start of one year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerBoundary {
    pub year: usize,
    pub median_depth: f64,
    pub q05_depth: f64,
    pub q95_depth: f64,
    /// Fraction of sampled paths that cross into this year.
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layers: Vec<LayerBoundary>,
    /// Years inside the sampled range that no path ever entered.
    pub missing_years: Vec<usize>,
}

/// For every year `y`, the depth at which a path first enters `y`, summarized
/// over paths by the median and central 90% interval (inverted-CDF quantiles,
/// so the interval endpoints are sample depths).
pub fn layer_boundaries(paths: &[Vec<usize>], space: &StateSpace, depths: &[f64]) -> LayerReport {
    if paths.is_empty() || depths.is_empty() {
        return LayerReport::default();
    }
    let first_year = paths.iter().map(|p| space.year(p[0])).min().unwrap_or(0) + 1;
    let last_year = paths
        .iter()
        .map(|p| space.year(*p.last().expect("non-empty path")))
        .max()
        .unwrap_or(0);
    let mut per_year: Vec<Vec<f64>> = vec![Vec::new(); last_year + 1];
    for p in paths {
        for i in 1..p.len() {
            let (y0, y1) = (space.year(p[i - 1]), space.year(p[i]));
            // Years jumped over by a multi-state step are never entered.
            if y1 > y0 {
                per_year[y1].push(depths[i]);
            }
        }
    }
    let mut report = LayerReport::default();
    for (y, ds) in per_year.iter_mut().enumerate().skip(first_year) {
        if ds.is_empty() {
            report.missing_years.push(y);
            continue;
        }
        ds.sort_by(|a, b| a.total_cmp(b));
        report.layers.push(LayerBoundary {
            year: y,
            median_depth: quantile_sorted(ds, 0.5).expect("non-empty"),
            q05_depth: quantile_sorted(ds, 0.05).expect("non-empty"),
            q95_depth: quantile_sorted(ds, 0.95).expect("non-empty"),
            fraction: ds.len() as f64 / paths.len() as f64,
        });
    }
    report
}

/// Exact boundary distribution from smoothed marginals of a monotone chain:
/// `P(year y first reached at depth i) = F_i(y) - F_{i-1}(y)` with
/// `F_i(y) = P(year(state_i) >= y)`. Returns `(year, probs over depth index)`.
pub fn boundary_distribution(chron: &Chronology, year: usize) -> Vec<f64> {
    let space = &chron.space;
    let cdf: Vec<f64> = chron
        .gamma
        .iter()
        .map(|w| {
            w.range()
                .filter(|&k| space.year(k) >= year)
                .map(|k| w.vals[k - w.lo])
                .sum()
        })
        .collect();
    let mut out = vec![0.0; cdf.len()];
    for i in 1..cdf.len() {
        out[i] = (cdf[i] - cdf[i - 1]).max(0.0);
    }
    out
}
