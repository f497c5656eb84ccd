//! Run configuration, read from JSON and echoed into `fit.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cts::CtsOptions;
use crate::error::{Error, Result};
use crate::hier::{AbPrior, TieMode};
use crate::inference::{MleOptions, ViOptions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Basic model, maximum likelihood, optionally batched.
    #[default]
    Hmm,
    /// Hierarchical model with tie-points, variational inference.
    Hier,
    /// Continuous-index model for irregular spacing and gaps.
    Cts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub data: PathBuf,
    /// States per year.
    pub n_s: usize,
    /// Years in the lattice; `None` sizes it from the data.
    pub m: Option<usize>,
    /// Extra years added when `m` is sized automatically.
    pub margin_years: usize,
    /// Batch length for the basic model; `None` fits the series at once.
    pub batch_len: Option<usize>,
    pub ties: Option<PathBuf>,
    /// Largest depth mismatch when matching tie-points; `None` is half the
    /// median spacing.
    pub tie_tolerance: Option<f64>,
    pub tie_mode: TieMode,
    pub ab_prior: AbPrior,
    /// Continuous-index model: one rate shared by all phases.
    pub constant_rate: bool,
    /// Continuous-index model: steps longer than this multiple of the median
    /// spacing are reported as gaps.
    pub gap_factor: f64,
    pub mle: MleOptions,
    pub vi: ViOptions,
    pub cts: CtsOptions,
    /// Posterior paths written to `paths.csv`.
    pub n_paths: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub write_gamma: bool,
    /// Treat non-convergence as a failure.
    pub strict: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Hmm,
            data: PathBuf::new(),
            n_s: 10,
            m: None,
            margin_years: 10,
            batch_len: None,
            ties: None,
            tie_tolerance: None,
            tie_mode: TieMode::Replace,
            ab_prior: AbPrior::Independent,
            constant_rate: false,
            gap_factor: 3.0,
            mle: MleOptions::default(),
            vi: ViOptions::default(),
            cts: CtsOptions::default(),
            n_paths: 200,
            seed: 0,
            threads: 0,
            write_gamma: false,
            strict: false,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Copies the run-wide seed and path count into the per-method options,
    /// so the echoed configuration states every setting that was used.
    pub fn resolved(mut self) -> Self {
        self.mle.seed = self.seed;
        self.mle.n_paths = self.n_paths;
        self.cts.seed = self.seed;
        self.cts.n_paths = self.n_paths;
        self.vi.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 {
            return Err(Error::Config("n_s must be at least 1".into()));
        }
        if !self.data.is_file() {
            return Err(Error::Config(format!(
                "data file {} does not exist",
                self.data.display()
            )));
        }
        if let Some(t) = &self.ties {
            if !t.is_file() {
                return Err(Error::Config(format!(
                    "tie-point file {} does not exist",
                    t.display()
                )));
            }
            if self.model != ModelKind::Hier {
                return Err(Error::Config(
                    "tie-points are only supported by the hierarchical model".into(),
                ));
            }
        }
        if let Some(b) = self.batch_len {
            if b < 2 * self.n_s {
                return Err(Error::Config(format!(
                    "batch length {b} is below 2 * n_s = {}",
                    2 * self.n_s
                )));
            }
        }
        if self.m == Some(0) {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if let Some(t) = self.tie_tolerance {
            if !(t >= 0.0) {
                return Err(Error::Config("tie tolerance must be non-negative".into()));
            }
        }
        if !(self.gap_factor > 1.0) {
            return Err(Error::Config("gap factor must exceed 1".into()));
        }
        Ok(())
    }
}
