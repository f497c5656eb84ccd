//! Parameter fitting: maximum likelihood (optionally in batches) for the
//! basic model and mean-field variational inference for the hierarchical one.

pub mod mle;
pub mod optim;
pub mod transform;
pub mod vi;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use mle::{
    fit_batched, fit_mle, initial_params, loglik_gradient, smoothed_chronology, BatchedFit,
    FixedBlocks, HmmGradient, HmmParams, MleFit, MleOptions,
};
pub use optim::{maximize, BfgsOptions, BfgsResult};
pub use transform::{ParamBlock, ParamLayout, Transform, UnconstrainedVector};
pub use vi::{
    elbo_estimate, fit_vi, maximize_elbo, vi_chronology, ElboEstimate, HierTarget,
    MeanFieldPosterior, ViFit, ViOptions,
};

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    /// Final objective (log-likelihood for MLE, ELBO for VI).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration; its length equals `iterations`.
    pub trace: Vec<f64>,
    /// Fitted parameters in their natural (constrained) units.
    pub params: BTreeMap<String, Vec<f64>>,
    /// Asymptotic standard errors from the observed information, when the
    /// Hessian at the optimum is negative definite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<BTreeMap<String, Vec<f64>>>,
    /// Set when the data carry no usable seasonal signal.
    #[serde(default)]
    pub weakly_identified: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Excluded from serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl FitReport {
    pub(crate) fn new(method: &str) -> Self {
        Self {
            method: method.to_string(),
            objective: f64::NAN,
            iterations: 0,
            converged: false,
            trace: Vec::new(),
            params: BTreeMap::new(),
            std_errors: None,
            weakly_identified: false,
            warnings: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }
}
