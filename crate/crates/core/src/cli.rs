//! Command-line front end. `cli_main` returns the process exit code:
//! 0 on success, 1 on invalid input or usage, 2 when inference fails (or
//! does not converge under `--strict`).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use crate::config::{ModelKind, RunConfig};
use crate::cts::RateVector;
use crate::error::{Error, Result};
use crate::hier::{AbPrior, TieMode};
use crate::hmm::{ObservationParams, StateSpace, StayProbabilities};
use crate::io::{self, write_csv};
use crate::pipeline::{self, RunSummary};
use crate::simulate::{
    regular_depths, simulate_hmm, simulate_sde_dataset, ChainSpec, SdePriorParams, SeasonalForm,
};

#[derive(Debug, Parser)]
#[command(
    name = "icechron",
    version,
    about = "Probabilistic ice-core chronologies from a seasonal proxy series"
)]
pub struct Cli {
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the basic model by maximum likelihood, optionally in batches.
    Fit(FitArgs),
    /// Fit the hierarchical model with tie-points by variational inference.
    FitHier(HierArgs),
    /// Fit the continuous-index model (irregular spacing, gaps).
    FitCts(CtsArgs),
    /// Write a synthetic core and its true chronology.
    Simulate(SimArgs),
    /// Rebuild the outputs of a finished run from the configuration in its fit.json.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// `depth,proxy` CSV (overrides the config file).
    data: Option<PathBuf>,
    /// JSON run configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// States per year.
    #[arg(long)]
    n_s: Option<usize>,
    /// Years in the state lattice (default: sized from the data).
    #[arg(long)]
    m: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Posterior paths to write.
    #[arg(long)]
    n_paths: Option<usize>,
    /// Also write the smoothed marginals to gamma.csv.
    #[arg(long)]
    gamma: bool,
    /// Exit with code 2 if any fit fails to converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fit contiguous batches of this many observations.
    #[arg(long)]
    batch_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TieModeArg {
    Replace,
    Both,
}

#[derive(Debug, Args)]
struct HierArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `depth,year` CSV of tie-points.
    #[arg(long)]
    ties: Option<PathBuf>,
    /// Largest depth mismatch when matching a tie-point to a sample.
    #[arg(long)]
    tie_tolerance: Option<f64>,
    #[arg(long, value_enum)]
    tie_mode: Option<TieModeArg>,
    /// Random-walk prior on the per-sample amplitude and offset.
    #[arg(long)]
    random_walk: bool,
    /// Iteration cap for the variational optimizer.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Args)]
struct CtsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// One rate shared by every phase.
    #[arg(long)]
    constant_rate: bool,
    /// Steps longer than this multiple of the median spacing count as gaps.
    #[arg(long)]
    gap_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimKind {
    /// Discrete stay-or-advance chain.
    Hmm,
    /// Exponential holding depths.
    Cts,
    /// Continuous latent time from the stochastic differential equation.
    Sde,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormArg {
    SinPi,
    Sin2Pi,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, value_enum, default_value_t = SimKind::Hmm)]
    kind: SimKind,
    /// Output directory for data.csv and truth.csv.
    #[arg(long)]
    out: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    spacing: f64,
    #[arg(long, default_value_t = 10)]
    n_s: usize,
    /// Stay probability (hmm).
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Rate per meter of every phase (cts; default gives 20 samples per year).
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Inverse length scale of the latent process (sde).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Accumulation scale (sde).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Diffusion of time itself (sde).
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    /// Laplace noise scale (sde).
    #[arg(long, default_value_t = 0.05)]
    laplace_scale: f64,
    #[arg(long, default_value_t = 10)]
    substeps: usize,
    #[arg(long, value_enum, default_value_t = FormArg::SinPi)]
    form: FormArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Directory of a finished run.
    run: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write gamma.csv.
    #[arg(long)]
    gamma: bool,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    strict: bool,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Inference(_) | Error::Infeasible(_) | Error::NonFiniteInit { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = if cli.quiet {
        LevelFilter::Error
    } else {
        LevelFilter::Info
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let quiet = cli.quiet;
    match dispatch(cli) {
        Ok(Outcome::Ran { summary, strict }) => {
            if !quiet {
                for f in &summary.files {
                    println!("wrote {}", f.display());
                }
                for r in &summary.reports {
                    println!(
                        "{}: objective {:.6} after {} iterations (converged: {})",
                        r.method, r.objective, r.iterations, r.converged
                    );
                }
            }
            if strict && !summary.converged() {
                eprintln!("error: a fit did not converge (--strict)");
                return 2;
            }
            0
        }
        Ok(Outcome::Simulated { files, years }) => {
            if !quiet {
                for f in &files {
                    println!("wrote {}", f.display());
                }
                println!("{years} years simulated");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

enum Outcome {
    Ran { summary: RunSummary, strict: bool },
    Simulated { files: Vec<PathBuf>, years: usize },
}

fn base_config(c: &CommonArgs, model: ModelKind, threads: Option<usize>) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_json_file(p)?,
        None => RunConfig::default(),
    };
    cfg.model = model;
    if let Some(d) = &c.data {
        cfg.data = d.clone();
    }
    if let Some(v) = c.n_s {
        cfg.n_s = v;
    }
    if c.m.is_some() {
        cfg.m = c.m;
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.n_paths {
        cfg.n_paths = v;
    }
    if let Some(v) = threads {
        cfg.threads = v;
    }
    cfg.write_gamma |= c.gamma;
    cfg.strict |= c.strict;
    Ok(cfg)
}

fn run(cfg: RunConfig) -> Result<Outcome> {
    let strict = cfg.strict;
    Ok(Outcome::Ran {
        summary: pipeline::run(&cfg)?,
        strict,
    })
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    let threads = cli.threads;
    match cli.command {
        Command::Fit(a) => {
            let mut cfg = base_config(&a.common, ModelKind::Hmm, threads)?;
            if a.batch_len.is_some() {
                cfg.batch_len = a.batch_len;
            }
            run(cfg)
        }
        Command::FitHier(a) => {
            let mut cfg = base_config(&a.common, ModelKind::Hier, threads)?;
            if a.ties.is_some() {
                cfg.ties = a.ties;
            }
            if a.tie_tolerance.is_some() {
                cfg.tie_tolerance = a.tie_tolerance;
            }
            match a.tie_mode {
                Some(TieModeArg::Replace) => cfg.tie_mode = TieMode::Replace,
                Some(TieModeArg::Both) => cfg.tie_mode = TieMode::Both,
                None => {}
            }
            if a.random_walk {
                cfg.ab_prior = AbPrior::RandomWalk;
            }
            if let Some(v) = a.max_iter {
                cfg.vi.max_iter = v;
            }
            run(cfg)
        }
        Command::FitCts(a) => {
            let mut cfg = base_config(&a.common, ModelKind::Cts, threads)?;
            cfg.constant_rate |= a.constant_rate;
            if let Some(v) = a.gap_factor {
                cfg.gap_factor = v;
            }
            run(cfg)
        }
        Command::Simulate(a) => simulate(&a),
        Command::Export(a) => {
            let mut cfg = pipeline::config_from_fit_json(a.run.join("fit.json"))?;
            cfg.out = a.out;
            cfg.write_gamma |= a.gamma;
            cfg.strict |= a.strict;
            if let Some(v) = a.n_paths {
                cfg.n_paths = v;
            }
            if let Some(v) = threads {
                cfg.threads = v;
            }
            run(cfg)
        }
    }
}

/// One row of `truth.csv`.
#[derive(serde::Serialize)]
struct TruthRow {
    depth: f64,
    time: f64,
    year: i64,
}

pub const TRUTH_HEADER: [&str; 3] = ["depth", "time", "year"];

fn simulate(a: &SimArgs) -> Result<Outcome> {
    if a.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    if !(a.spacing > 0.0) {
        return Err(Error::Config("--spacing must be positive".into()));
    }
    io::ensure_writable_dir(&a.out)?;
    let depths = regular_depths(a.n, a.spacing);
    let (data, truth): (_, Vec<TruthRow>) = match a.kind {
        SimKind::Hmm | SimKind::Cts => {
            let chain = match a.kind {
                SimKind::Hmm => ChainSpec::Discrete(StayProbabilities::uniform(a.n_s, a.p)?),
                _ => {
                    let q = a.rate.unwrap_or(a.n_s as f64 / (20.0 * a.spacing));
                    ChainSpec::Continuous(RateVector::constant(a.n_s, q)?)
                }
            };
            let margin = match a.kind {
                SimKind::Hmm => 10,
                _ => a.n / a.n_s + 10,
            };
            let space = StateSpace::for_observations(a.n, a.n_s, margin)?;
            let obs = ObservationParams::new(a.a, a.b, a.sigma)?;
            let sim = simulate_hmm(&space, &chain, &obs, &depths, a.seed)?;
            let truth = sim
                .states
                .iter()
                .zip(&depths)
                .map(|(&k, &depth)| TruthRow {
                    depth,
                    time: space.time(k),
                    year: space.year(k) as i64,
                })
                .collect();
            (sim.data, truth)
        }
        SimKind::Sde => {
            let params = SdePriorParams {
                lambda: a.lambda,
                alpha: a.alpha,
                eps: a.eps,
                laplace_scale: a.laplace_scale,
            };
            let form = match a.form {
                FormArg::SinPi => SeasonalForm::SinPi,
                FormArg::Sin2Pi => SeasonalForm::Sin2Pi,
            };
            let ds = simulate_sde_dataset(&params, &depths, a.substeps.max(1), form, a.seed)?;
            let truth = ds
                .path
                .t
                .iter()
                .zip(&depths)
                .map(|(&t, &depth)| TruthRow {
                    depth,
                    time: t,
                    year: t.floor() as i64,
                })
                .collect();
            (ds.data, truth)
        }
    };
    let years = match (truth.first(), truth.last()) {
        (Some(f), Some(l)) => (l.year - f.year).max(0) as usize,
        _ => 0,
    };
    let data_path = a.out.join("data.csv");
    let truth_path = a.out.join("truth.csv");
    io::write_dataset(&data_path, &data)?;
    write_csv(&truth_path, &TRUTH_HEADER, truth)?;
    Ok(Outcome::Simulated {
        files: vec![data_path, truth_path],
        years,
    })
}
