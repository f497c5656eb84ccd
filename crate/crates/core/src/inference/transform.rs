//! Bijections between constrained model parameters and the flat real vector
//! the optimizers work on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logistic, logit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    /// Positive reals, `x = exp(z)`.
    Log,
    /// The open unit interval, `x = logistic(z)`.
    Logit,
}

impl Transform {
    #[inline]
    pub fn constrain(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::Log => z.exp(),
            Transform::Logit => logistic(z),
        }
    }

    pub fn unconstrain(self, x: f64) -> Option<f64> {
        match self {
            Transform::Identity => x.is_finite().then_some(x),
            Transform::Log => (x > 0.0 && x.is_finite()).then(|| x.ln()),
            Transform::Logit => (x > 0.0 && x < 1.0).then(|| logit(x)),
        }
    }

    /// `log |dx/dz|`.
    #[inline]
    pub fn log_jacobian(self, z: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => z,
            Transform::Logit => -crate::math::softplus(-z) - crate::math::softplus(z),
        }
    }

    /// `dx/dz`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => z.exp(),
            Transform::Logit => {
                let x = logistic(z);
                x * (1.0 - x)
            }
        }
    }

    /// `d log|dx/dz| / dz`.
    #[inline]
    pub fn log_jacobian_grad(self, z: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => 1.0,
            Transform::Logit => 1.0 - 2.0 * logistic(z),
        }
    }
}

/// One named, contiguous slice of the flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub transform: Transform,
}

impl ParamBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Registry of parameter blocks in a fixed order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    dim: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its range in the flat vector.
    pub fn push(&mut self, name: &str, len: usize, transform: Transform) -> std::ops::Range<usize> {
        assert!(self.block(name).is_none(), "duplicate block {name}");
        let b = ParamBlock {
            name: name.to_string(),
            offset: self.dim,
            len,
            transform,
        };
        self.dim += len;
        let r = b.range();
        self.blocks.push(b);
        r
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn range(&self, name: &str) -> std::ops::Range<usize> {
        self.block(name)
            .unwrap_or_else(|| panic!("unknown parameter block {name}"))
            .range()
    }

    fn per_coord(&self) -> impl Iterator<Item = (usize, Transform)> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| b.range().map(move |i| (i, b.transform)))
    }

    pub fn constrain(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.dim);
        self.per_coord().map(|(i, t)| t.constrain(z[i])).collect()
    }

    pub fn unconstrain(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::param(
                "parameters",
                format!("expected {} values, got {}", self.dim, x.len()),
            ));
        }
        let mut out = vec![0.0; self.dim];
        for b in &self.blocks {
            for i in b.range() {
                out[i] = b.transform.unconstrain(x[i]).ok_or_else(|| {
                    Error::param(
                        format!("{}[{}]", b.name, i - b.offset),
                        format!("{} is outside the support", x[i]),
                    )
                })?;
            }
        }
        Ok(out)
    }

    /// Sum of log-Jacobians of all coordinates.
    pub fn log_jacobian(&self, z: &[f64]) -> f64 {
        self.per_coord().map(|(i, t)| t.log_jacobian(z[i])).sum()
    }

    /// Maps a gradient w.r.t. constrained values to one w.r.t. `z`, adding
    /// the log-Jacobian gradient when `with_jacobian` is set.
    pub fn pull_back(&self, z: &[f64], grad_x: &[f64], with_jacobian: bool) -> Vec<f64> {
        self.per_coord()
            .map(|(i, t)| {
                let g = grad_x[i] * t.derivative(z[i]);
                if with_jacobian {
                    g + t.log_jacobian_grad(z[i])
                } else {
                    g
                }
            })
            .collect()
    }

    /// Constrained values of one block.
    pub fn values<'a>(&self, x: &'a [f64], name: &str) -> &'a [f64] {
        &x[self.range(name)]
    }
}

/// A flat unconstrained vector together with its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedVector {
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl UnconstrainedVector {
    pub fn from_constrained(layout: ParamLayout, x: &[f64]) -> Result<Self> {
        let values = layout.unconstrain(x)?;
        Ok(Self { layout, values })
    }

    pub fn constrained(&self) -> Vec<f64> {
        self.layout.constrain(&self.values)
    }

    /// Constrained values keyed by block name.
    pub fn named(&self) -> std::collections::BTreeMap<String, Vec<f64>> {
        let x = self.constrained();
        self.layout
            .blocks()
            .iter()
            .map(|b| (b.name.clone(), x[b.range()].to_vec()))
            .collect()
    }
}
