//! CSV ingestion and result export.
//!
//! Every CSV written here has a fixed header and is read back by the
//! matching reader. Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hier::TiePoint;
use crate::hmm::{Chronology, LayerReport};
use crate::inference::FitReport;
use crate::series::DepthSeries;

/// A dataset read from disk plus what was discarded on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub series: DepthSeries,
    /// Rows whose proxy was `NaN` or empty.
    pub dropped_nan: usize,
    /// Source line of each retained row, in depth order.
    pub lines: Vec<u64>,
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = source.kind() {
        match source.into_kind() {
            csv::ErrorKind::Io(e) => return Error::io(path, e),
            _ => unreachable!(),
        }
    }
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(false)
        .from_reader(file))
}

/// Reads records, checking the header; `None` for a zero-byte file.
fn records(path: &Path, header: &[&str]) -> Result<Option<Vec<(u64, csv::StringRecord)>>> {
    let mut rdr = open_reader(path)?;
    let mut iter = rdr.records();
    let Some(first) = iter.next() else {
        return Ok(None);
    };
    let first = first.map_err(|e| csv_err(path, e))?;
    let got: Vec<&str> = first.iter().collect();
    if got != header {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                got.join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in iter {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        out.push((line, rec));
    }
    Ok(Some(out))
}

fn number(path: &Path, line: u64, column: &str, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("{column} `{field}` is not a number")))
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("nan")
}

/// Reads a `depth,proxy` CSV. Rows may come in any order; they are sorted by
/// depth. Rows with a missing proxy are dropped and counted.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let rows =
        records(path, &["depth", "proxy"])?.ok_or_else(|| parse_err(path, 1, "file is empty"))?;
    let mut kept: Vec<(f64, f64, u64)> = Vec::with_capacity(rows.len());
    let mut dropped = 0;
    for (line, rec) in &rows {
        let depth = number(path, *line, "depth", &rec[0])?;
        if !depth.is_finite() || depth <= 0.0 {
            return Err(parse_err(
                path,
                *line,
                format!("depth {depth} must be positive"),
            ));
        }
        if is_missing(&rec[1]) {
            dropped += 1;
            continue;
        }
        let proxy = number(path, *line, "proxy", &rec[1])?;
        if !proxy.is_finite() {
            return Err(parse_err(path, *line, "proxy is not finite"));
        }
        kept.push((depth, proxy, *line));
    }
    if kept.is_empty() {
        return Err(parse_err(path, 1, "no usable rows"));
    }
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = kept.windows(2).find(|w| w[0].0 == w[1].0) {
        let (l1, l2) = (w[0].2.min(w[1].2), w[0].2.max(w[1].2));
        return Err(parse_err(
            path,
            l2,
            format!("depth {} duplicates line {l1}", w[0].0),
        ));
    }
    if dropped > 0 {
        warn!(
            "{}: dropped {dropped} rows with a missing proxy",
            path.display()
        );
    }
    let lines = kept.iter().map(|r| r.2).collect();
    let series = DepthSeries::new(
        kept.iter().map(|r| r.0).collect(),
        kept.iter().map(|r| r.1).collect(),
    )?;
    Ok(Dataset {
        series,
        dropped_nan: dropped,
        lines,
    })
}

/// Writes a `depth,proxy` CSV.
pub fn write_dataset(path: impl AsRef<Path>, data: &DepthSeries) -> Result<()> {
    let rows = data
        .depths()
        .iter()
        .zip(data.proxy())
        .map(|(&depth, &proxy)| DatasetRow { depth, proxy });
    write_csv(path.as_ref(), &["depth", "proxy"], rows)
}

#[derive(Serialize)]
struct DatasetRow {
    depth: f64,
    proxy: f64,
}

/// Reads a `depth,year` CSV and resolves each tie-point to the nearest
/// sample of `data`. `tolerance` defaults to half the median spacing.
pub fn read_tiepoints(
    path: impl AsRef<Path>,
    data: &DepthSeries,
    tolerance: Option<f64>,
) -> Result<Vec<TiePoint>> {
    let path = path.as_ref();
    let Some(rows) = records(path, &["depth", "year"])? else {
        return Ok(Vec::new());
    };
    let depths = data.depths();
    let tol = tolerance.unwrap_or_else(|| 0.5 * data.median_spacing().unwrap_or(0.0));
    let mut ties: Vec<(f64, TiePoint, u64)> = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let depth = number(path, *line, "depth", &rec[0])?;
        let year: usize = rec[1].parse().map_err(|_| {
            parse_err(
                path,
                *line,
                format!("year `{}` is not a non-negative integer", &rec[1]),
            )
        })?;
        let at = depths.partition_point(|&d| d < depth);
        let mut cands: Vec<usize> = [at.checked_sub(1), Some(at)]
            .into_iter()
            .flatten()
            .filter(|&i| i < depths.len())
            .collect();
        cands.sort_by(|&i, &j| {
            (depths[i] - depth)
                .abs()
                .total_cmp(&(depths[j] - depth).abs())
        });
        let Some(&best) = cands.first() else {
            return Err(parse_err(path, *line, "dataset is empty"));
        };
        if (depths[best] - depth).abs() > tol {
            let listed: Vec<String> = cands
                .iter()
                .map(|&i| format!("row {i} at {}", depths[i]))
                .collect();
            return Err(parse_err(
                path,
                *line,
                format!(
                    "no sample within {tol} m of depth {depth}; nearest: {}",
                    listed.join(", ")
                ),
            ));
        }
        ties.push((
            depth,
            TiePoint {
                depth_index: best,
                year,
            },
            *line,
        ));
    }
    ties.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = ties.windows(2).find(|w| w[1].1.year < w[0].1.year) {
        return Err(parse_err(
            path,
            w[1].2,
            format!(
                "year {} at depth {} is earlier than year {} at the shallower depth {}",
                w[1].1.year, w[1].0, w[0].1.year, w[0].0
            ),
        ));
    }
    Ok(ties.into_iter().map(|t| t.1).collect())
}

/// One row of `chronology.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChronologyRow {
    pub depth: f64,
    pub mean_year: f64,
    pub q05_year: f64,
    pub q50_year: f64,
    pub q95_year: f64,
}

/// One row of `paths.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub path_id: usize,
    pub depth: f64,
    /// Time in years since the top of the lattice (year plus phase fraction).
    pub year: f64,
}

/// One row of `gamma.csv`; only states with positive mass are listed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub depth: f64,
    pub state: usize,
    pub year: usize,
    pub phase: usize,
    pub prob: f64,
}

/// One row of `layers.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub year: usize,
    pub median_depth: f64,
    pub q05_depth: f64,
    pub q95_depth: f64,
    pub fraction: f64,
}

/// One row of `gaps.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub upper_depth: f64,
    pub lower_depth: f64,
    pub years: i64,
    pub prob: f64,
}

pub const CHRONOLOGY_HEADER: [&str; 5] = ["depth", "mean_year", "q05_year", "q50_year", "q95_year"];
pub const PATHS_HEADER: [&str; 3] = ["path_id", "depth", "year"];
pub const GAMMA_HEADER: [&str; 5] = ["depth", "state", "year", "phase", "prob"];
pub const LAYERS_HEADER: [&str; 5] = ["year", "median_depth", "q05_depth", "q95_depth", "fraction"];
pub const GAPS_HEADER: [&str; 4] = ["upper_depth", "lower_depth", "years", "prob"];

/// Writes `header` then one line per row, even when there are no rows.
pub fn write_csv<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(std::io::BufWriter::new(file));
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_csv`], checking its header.
pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>, header: &[&str]) -> Result<Vec<T>> {
    let path = path.as_ref();
    let Some(rows) = records(path, header)? else {
        return Err(parse_err(path, 1, "file is empty"));
    };
    let hdr = csv::StringRecord::from(header.to_vec());
    rows.into_iter()
        .map(|(line, rec)| {
            rec.deserialize(Some(&hdr))
                .map_err(|e| parse_err(path, line, e.to_string()))
        })
        .collect()
}

pub fn chronology_rows(chron: &Chronology) -> Vec<ChronologyRow> {
    chron
        .time_summaries()
        .into_iter()
        .zip(&chron.depths)
        .map(|(t, &depth)| ChronologyRow {
            depth,
            mean_year: t.mean,
            q05_year: t.q05,
            q50_year: t.q50,
            q95_year: t.q95,
        })
        .collect()
}

pub fn path_rows(chron: &Chronology) -> impl Iterator<Item = PathRow> + '_ {
    chron.paths.iter().enumerate().flat_map(move |(id, p)| {
        p.iter()
            .zip(&chron.depths)
            .map(move |(&k, &depth)| PathRow {
                path_id: id,
                depth,
                year: chron.space.time(k),
            })
    })
}

pub fn gamma_rows(chron: &Chronology) -> impl Iterator<Item = GammaRow> + '_ {
    chron
        .gamma
        .iter()
        .zip(&chron.depths)
        .flat_map(move |(w, &depth)| {
            w.range()
                .filter(move |&k| w.vals[k - w.lo] > 0.0)
                .map(move |k| GammaRow {
                    depth,
                    state: k,
                    year: chron.space.year(k),
                    phase: chron.space.phase(k),
                    prob: w.vals[k - w.lo],
                })
        })
}

pub fn layer_rows(report: &LayerReport) -> Vec<LayerRow> {
    report
        .layers
        .iter()
        .map(|l| LayerRow {
            year: l.year,
            median_depth: l.median_depth,
            q05_depth: l.q05_depth,
            q95_depth: l.q95_depth,
            fraction: l.fraction,
        })
        .collect()
}

/// Checks that `dir` exists (creating it if needed) and accepts new files.
pub fn ensure_writable_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".icechron-write-probe");
    File::create(&probe).map_err(|e| Error::io(dir, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Everything a finished run exports.
#[derive(Debug, Clone, Copy)]
pub struct RunResults<'a> {
    pub chronology: &'a Chronology,
    pub reports: &'a [FitReport],
    /// Serialized verbatim into `fit.json` under `config`.
    pub config: &'a serde_json::Value,
    pub gaps: &'a [GapRow],
    pub write_gamma: bool,
}

#[derive(Serialize)]
struct FitFile<'a> {
    config: &'a serde_json::Value,
    reports: &'a [FitReport],
    n_layers: usize,
}

#[derive(Serialize)]
struct TimingFile {
    total_fit_secs: f64,
    fits_secs: Vec<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file).map_err(|e| Error::io(path, e))
}

/// Writes the output files of a run into `outdir`; returns their paths.
pub fn write_results(results: &RunResults<'_>, outdir: &Path) -> Result<Vec<PathBuf>> {
    ensure_writable_dir(outdir)?;
    let chron = results.chronology;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = outdir.join(name);
        written.push(p.clone());
        p
    };
    write_csv(
        &out("chronology.csv"),
        &CHRONOLOGY_HEADER,
        chronology_rows(chron),
    )?;
    write_csv(&out("paths.csv"), &PATHS_HEADER, path_rows(chron))?;
    if results.write_gamma {
        write_csv(&out("gamma.csv"), &GAMMA_HEADER, gamma_rows(chron))?;
    }
    let layers = chron.layer_boundaries();
    write_csv(&out("layers.csv"), &LAYERS_HEADER, layer_rows(&layers))?;
    if !results.gaps.is_empty() {
        write_csv(&out("gaps.csv"), &GAPS_HEADER, results.gaps.iter().copied())?;
    }
    write_json(
        &out("fit.json"),
        &FitFile {
            config: results.config,
            reports: results.reports,
            n_layers: layers.layers.len(),
        },
    )?;
    let fits_secs: Vec<f64> = results.reports.iter().map(|r| r.wall_clock_secs).collect();
    write_json(
        &out("timing.json"),
        &TimingFile {
            total_fit_secs: fits_secs.iter().sum(),
            fits_secs,
        },
    )?;
    Ok(written)
}
