use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::space::StateSpace;
use crate::error::{Error, Result};
use crate::math::normal_logpdf;
use crate::series::DepthSeries;

/// Cosine emission: `s | t ~ N(a cos(2 pi t) + b, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationParams {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl ObservationParams {
    pub fn new(a: f64, b: f64, sigma: f64) -> Result<Self> {
        let p = Self { a, b, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() {
            return Err(Error::param("a", "must be finite"));
        }
        if !self.b.is_finite() {
            return Err(Error::param("b", "must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(
                "sigma",
                format!("must be > 0, got {}", self.sigma),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn mean(&self, state_time: f64) -> f64 {
        self.a * (TAU * state_time).cos() + self.b
    }
}

/// `log N(s; a cos(2 pi t) + b, sigma^2)`.
#[inline]
pub fn emission_logdensity(s: f64, state_time: f64, obs: &ObservationParams) -> f64 {
    normal_logpdf(s, obs.mean(state_time), obs.sigma)
}

/// One row of log emission densities over all states.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionRow {
    /// Depends on the state only through its phase; indexed by `phase(k)`.
    Periodic(Vec<f64>),
    /// Arbitrary per-state values (tie-point rows).
    Dense(Vec<f64>),
}

/// Logical `n x K` matrix of `log p(s_i | state k)`. Rows that depend only
/// on the phase are stored with `n_s` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    space: StateSpace,
    rows: Vec<EmissionRow>,
}

impl EmissionMatrix {
    pub fn from_rows(space: StateSpace, rows: Vec<EmissionRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            let (len, want) = match r {
                EmissionRow::Periodic(v) => (v.len(), space.n_s()),
                EmissionRow::Dense(v) => (v.len(), space.total_states()),
            };
            if len != want {
                return Err(Error::Input(format!(
                    "emission row {i} has {len} entries, expected {want}"
                )));
            }
        }
        Ok(Self { space, rows })
    }

    /// Emissions with shared parameters for every row.
    pub fn build(data: &DepthSeries, space: &StateSpace, obs: &ObservationParams) -> Self {
        let rows = data
            .proxy()
            .iter()
            .map(|&s| periodic_row(space, s, obs))
            .collect();
        Self {
            space: *space,
            rows,
        }
    }

    /// Emissions with per-datapoint amplitude and offset.
    pub fn build_varying(
        data: &DepthSeries,
        space: &StateSpace,
        a: &[f64],
        b: &[f64],
        sigma: f64,
    ) -> Result<Self> {
        let n = data.len();
        if a.len() != n || b.len() != n {
            return Err(Error::Input(format!(
                "per-datapoint parameters need length {n} (got a: {}, b: {})",
                a.len(),
                b.len()
            )));
        }
        let rows = data
            .proxy()
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let obs = ObservationParams {
                    a: a[i],
                    b: b[i],
                    sigma,
                };
                periodic_row(space, s, &obs)
            })
            .collect();
        Ok(Self {
            space: *space,
            rows,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_states(&self) -> usize {
        self.space.total_states()
    }

    pub fn row(&self, i: usize) -> &EmissionRow {
        &self.rows[i]
    }

    pub fn set_row(&mut self, i: usize, row: EmissionRow) {
        self.rows[i] = row;
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        match &self.rows[i] {
            EmissionRow::Periodic(v) => v[self.space.phase(k)],
            EmissionRow::Dense(v) => v[k],
        }
    }

    /// Dense copy of row `i`.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        (0..self.n_states()).map(|k| self.get(i, k)).collect()
    }
}

fn periodic_row(space: &StateSpace, s: f64, obs: &ObservationParams) -> EmissionRow {
    let n_s = space.n_s();
    // phase j corresponds to time j / n_s modulo whole years.
    EmissionRow::Periodic(
        (0..n_s)
            .map(|j| emission_logdensity(s, j as f64 / n_s as f64, obs))
            .collect(),
    )
}
