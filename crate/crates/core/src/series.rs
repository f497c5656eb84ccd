use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Proxy readings along the core. Depths are in meters and strictly
/// increasing; missing sections are simply absent rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSeries {
    depths: Vec<f64>,
    proxy: Vec<f64>,
}

impl DepthSeries {
    pub fn new(depths: Vec<f64>, proxy: Vec<f64>) -> Result<Self> {
        if depths.len() != proxy.len() {
            return Err(Error::Input(format!(
                "depth and proxy lengths differ ({} vs {})",
                depths.len(),
                proxy.len()
            )));
        }
        if let Some(i) = depths.iter().position(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::Input(format!(
                "depth at row {i} must be a positive finite number (got {})",
                depths[i]
            )));
        }
        if let Some(i) = proxy.iter().position(|s| !s.is_finite()) {
            return Err(Error::Input(format!("proxy at row {i} is not finite")));
        }
        if let Some(i) = depths.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Input(format!(
                "depths must be strictly increasing (rows {} and {}: {} then {})",
                i,
                i + 1,
                depths[i],
                depths[i + 1]
            )));
        }
        Ok(Self { depths, proxy })
    }

    /// Series on a regular grid `spacing, 2*spacing, ...`.
    pub fn regular(spacing: f64, proxy: Vec<f64>) -> Result<Self> {
        let depths = (1..=proxy.len()).map(|i| i as f64 * spacing).collect();
        Self::new(depths, proxy)
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn proxy(&self) -> &[f64] {
        &self.proxy
    }

    /// Contiguous sub-series `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> DepthSeries {
        DepthSeries {
            depths: self.depths[range.clone()].to_vec(),
            proxy: self.proxy[range].to_vec(),
        }
    }

    /// Copy with the rows in `drop` removed.
    pub fn without(&self, drop: std::ops::Range<usize>) -> DepthSeries {
        let keep = |i: &usize| !drop.contains(i);
        DepthSeries {
            depths: (0..self.len())
                .filter(keep)
                .map(|i| self.depths[i])
                .collect(),
            proxy: (0..self.len())
                .filter(keep)
                .map(|i| self.proxy[i])
                .collect(),
        }
    }

    pub fn median_spacing(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let gaps: Vec<f64> = self.depths.windows(2).map(|w| w[1] - w[0]).collect();
        Some(crate::math::median(&gaps))
    }

    /// Indices `i` such that the step from row `i` to `i + 1` exceeds
    /// `factor` times the median spacing.
    pub fn gaps(&self, factor: f64) -> Vec<usize> {
        let Some(med) = self.median_spacing() else {
            return Vec::new();
        };
        self.depths
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] - w[0] > factor * med)
            .map(|(i, _)| i)
            .collect()
    }
}
