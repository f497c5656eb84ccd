//! End-to-end runs driven by a [`RunConfig`].

use std::path::PathBuf;

use log::{info, warn};

use crate::config::{ModelKind, RunConfig};
use crate::cts::{fit_mle_cts, gap_posterior, initial_cts_params};
use crate::error::{Error, Result};
use crate::hier::{HierModel, HierPrior, TiePoint};
use crate::hmm::{Chronology, StateSpace};
use crate::inference::{
    fit_batched, fit_mle, fit_vi, initial_params, smoothed_chronology, vi_chronology, FitReport,
};
use crate::io::{self, GapRow, RunResults};

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    /// The configuration actually used, as echoed into `fit.json`.
    pub config: RunConfig,
    pub chronology: Chronology,
    pub reports: Vec<FitReport>,
    pub files: Vec<PathBuf>,
    pub dropped_nan: usize,
}

impl RunSummary {
    pub fn converged(&self) -> bool {
        self.reports
            .iter()
            .all(|r| r.converged || r.weakly_identified)
    }
}

/// Validates `config`, fits, and writes every output file. Runs on a
/// dedicated pool of `config.threads` workers.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let config = config.clone().resolved();
    config.validate()?;
    io::ensure_writable_dir(&config.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_inner(config))
}

fn run_inner(config: RunConfig) -> Result<RunSummary> {
    let dataset = io::read_dataset(&config.data)?;
    let data = dataset.series;
    let n = data.len();
    info!("{} observations from {}", n, config.data.display());
    let n_s = config.n_s;
    let space = match config.m {
        Some(m) => StateSpace::new(n_s, m)?,
        None => StateSpace::for_observations(n, n_s, config.margin_years)?,
    };
    let log_init = space.default_log_init();
    let mut gaps = Vec::new();

    let (chronology, reports) = match config.model {
        ModelKind::Hmm => {
            let init = initial_params(&data, n_s)?;
            match config.batch_len {
                Some(len) if len < n => {
                    let fit = fit_batched(&data, &space, &init, len, &config.mle)?;
                    info!("fitted {} batches", fit.batches.len());
                    (fit.chronology, fit.reports)
                }
                _ => {
                    let fit = fit_mle(&data, &space, &init, &log_init, &config.mle)?;
                    let (chron, _) = smoothed_chronology(
                        &data,
                        &space,
                        &fit.params.emissions(&data, &space),
                        &fit.params.transitions(&space)?,
                        &log_init,
                        config.n_paths,
                        config.seed,
                    )?;
                    (chron, vec![fit.report])
                }
            }
        }
        ModelKind::Hier => {
            let ties = match &config.ties {
                Some(p) => io::read_tiepoints(p, &data, config.tie_tolerance)?,
                None => Vec::new(),
            };
            let mut prior = HierPrior::for_data(&data);
            prior.ab_prior = config.ab_prior;
            let model = HierModel::new(data.clone(), space, ties.clone(), config.tie_mode, prior)?;
            let fit = fit_vi(model, &config.vi)?;
            let per_draw = config.n_paths.div_ceil(config.vi.n_draws.max(1));
            let chron = vi_chronology(
                &fit.target,
                &fit.q,
                config.vi.n_draws,
                per_draw,
                config.seed,
            )?;
            verify_ties(&chron, &ties)?;
            (chron, vec![fit.report])
        }
        ModelKind::Cts => {
            let init = initial_cts_params(&data, n_s, config.constant_rate)?;
            let fit = fit_mle_cts(&data, &space, &init, &log_init, &config.cts)?;
            let gap_idx = data.gaps(config.gap_factor);
            let (chron, posts) = gap_posterior(
                &data,
                &space,
                &fit.params,
                &log_init,
                &gap_idx,
                config.n_paths,
                config.seed,
            )?;
            for g in posts {
                let d = data.depths();
                for (years, prob) in g.elapsed_years {
                    gaps.push(GapRow {
                        upper_depth: d[g.gap_index],
                        lower_depth: d[g.gap_index + 1],
                        years,
                        prob,
                    });
                }
            }
            (chron, vec![fit.report])
        }
    };

    let max_step = match config.model {
        ModelKind::Cts => usize::MAX,
        _ => 1,
    };
    chronology.check(max_step)?;
    for r in reports
        .iter()
        .filter(|r| !r.converged && !r.weakly_identified)
    {
        warn!(
            "{} fit did not converge after {} iterations",
            r.method, r.iterations
        );
    }
    let echo = serde_json::to_value(&config)?;
    let files = io::write_results(
        &RunResults {
            chronology: &chronology,
            reports: &reports,
            config: &echo,
            gaps: &gaps,
            write_gamma: config.write_gamma,
        },
        &config.out,
    )?;
    Ok(RunSummary {
        config,
        chronology,
        reports,
        files,
        dropped_nan: dataset.dropped_nan,
    })
}

/// Every sampled path and all smoothed mass must sit in the tie year.
fn verify_ties(chron: &Chronology, ties: &[TiePoint]) -> Result<()> {
    let space = &chron.space;
    for tie in ties {
        let i = tie.depth_index;
        if chron.paths.iter().any(|p| space.year(p[i]) != tie.year) {
            return Err(Error::Inference(format!(
                "a sampled path violates the tie-point at row {i}"
            )));
        }
        let w = &chron.gamma[i];
        let off: f64 = w
            .range()
            .filter(|&k| space.year(k) != tie.year)
            .map(|k| w.vals[k - w.lo])
            .sum();
        if off != 0.0 {
            return Err(Error::Inference(format!(
                "smoothed mass {off} off the tie year at row {i}"
            )));
        }
    }
    Ok(())
}

/// Reads the configuration echoed into a finished run's `fit.json`.
pub fn config_from_fit_json(path: impl AsRef<std::path::Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let cfg = v
        .get("config")
        .ok_or_else(|| Error::Input(format!("{} has no `config` entry", path.display())))?;
    Ok(serde_json::from_value(cfg.clone())?)
}
