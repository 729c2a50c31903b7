//! Guardrail sweeps over the attack optimizer and safe-region figure data.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tfmm_guard::bounds::{safe_region, Guardrails};
use tfmm_guard::optimizer::{search_cell, SearchError, SearchSpec};

pub use config::{ConfigError, GridSpec, Rail, Spacing, SweepConfig};

/// Exact CSV header of sweep results.
pub const RESULTS_HEADER: [&str; 8] = [
    "max_trade_fraction",
    "min_weight",
    "max_weight_change",
    "z_norm",
    "found",
    "restarts",
    "oracle_failures",
    "wall_time_s",
];

pub const THREADS_ENV: &str = "TFMM_GUARD_THREADS";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cell {cell}: {source}")]
    Search { cell: usize, source: SearchError },
    #[error("{THREADS_ENV}={0} is not a positive integer")]
    ThreadsEnv(String),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCellResult {
    pub max_trade_fraction: f64,
    pub min_weight: f64,
    pub max_weight_change: f64,
    pub z_norm: f64,
    /// Written as 0/1.
    #[serde(with = "bool_as_int")]
    pub found: bool,
    pub restarts: usize,
    pub oracle_failures: usize,
    pub wall_time_s: f64,
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        Ok(u8::deserialize(d)? != 0)
    }
}

/// Per-cell detail kept out of the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDetail {
    pub index: usize,
    pub z_norm: f64,
    /// Best attack rescored with a fee-free closing arbitrage.
    pub z_ub_norm: f64,
    pub best_restart: Option<usize>,
    pub wall_time_s: f64,
}

/// A found attack at a setting stricter than one where none was found,
/// along a single grid line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierViolation {
    pub varying: Rail,
    pub loose_cell: usize,
    pub strict_cell: usize,
    pub z_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub config: SweepConfig,
    pub master_seed: u64,
    pub version: String,
    pub total_cells: usize,
    pub total_restarts: usize,
    pub oracle_failures: usize,
    pub threads: usize,
    pub wall_time_s: f64,
    pub frontier_violations: Vec<FrontierViolation>,
    pub cells: Vec<CellDetail>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepCellResult>,
    pub metadata: SweepMetadata,
}

/// Worker count: the environment override, then the config hint, then the
/// machine's parallelism.
pub fn resolve_threads(hint: Option<usize>) -> Result<usize, SweepError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(SweepError::ThreadsEnv(v)),
        };
    }
    Ok(hint.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

fn cell_spec(cfg: &SweepConfig, rails: Guardrails, index: usize) -> SearchSpec {
    let mut spec = SearchSpec::new(cfg.n_tokens, rails, cfg.gamma, cfg.n_restarts, cfg.master_seed);
    spec.max_iters = cfg.max_iters;
    spec.cell_index = index as u32;
    spec
}

/// Runs every cell and computes the rows and metadata without writing.
pub fn compute_sweep(cfg: &SweepConfig, threads: usize) -> Result<SweepOutput, SweepError> {
    cfg.validate()?;
    let cells = cfg.cells();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let start = Instant::now();
    let results: Vec<Result<(SweepCellResult, CellDetail), SweepError>> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(index, &rails)| {
                let t0 = Instant::now();
                let best = search_cell(&cell_spec(cfg, rails, index))
                    .map_err(|source| SweepError::Search { cell: index, source })?;
                let elapsed = t0.elapsed().as_secs_f64();
                let row = SweepCellResult {
                    max_trade_fraction: rails.max_trade_fraction,
                    min_weight: rails.min_weight,
                    max_weight_change: rails.max_weight_change,
                    z_norm: best.z_norm,
                    found: best.found,
                    restarts: best.restarts_used,
                    oracle_failures: best.oracle_failures,
                    wall_time_s: if cfg.record_wall_time { elapsed } else { 0.0 },
                };
                let detail = CellDetail {
                    index,
                    z_norm: best.z_norm,
                    z_ub_norm: best.z_ub_norm,
                    best_restart: best.best_restart,
                    wall_time_s: elapsed,
                };
                Ok((row, detail))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut details = Vec::with_capacity(results.len());
    for r in results {
        let (row, detail) = r?;
        rows.push(row);
        details.push(detail);
    }
    let metadata = SweepMetadata {
        config: cfg.clone(),
        master_seed: cfg.master_seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        total_cells: rows.len(),
        total_restarts: rows.iter().map(|r| r.restarts).sum(),
        oracle_failures: rows.iter().map(|r| r.oracle_failures).sum(),
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        frontier_violations: frontier_scan(cfg, &rows),
        cells: details,
    };
    Ok(SweepOutput { rows, metadata })
}

/// Runs the sweep and writes the CSV and its JSON sidecar.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput, SweepError> {
    let threads = resolve_threads(cfg.parallelism)?;
    let out = compute_sweep(cfg, threads)?;
    write_results_csv(&cfg.output_path, &out.rows)?;
    let sidecar = cfg.sidecar_path();
    let json = serde_json::to_vec_pretty(&out.metadata).map_err(|source| SweepError::Json {
        path: sidecar.clone(),
        source,
    })?;
    write_atomic(&sidecar, |f| f.write_all(&json))?;
    Ok(out)
}

/// Checks every grid line for attacks found at stricter settings than a
/// setting where none was found.
pub fn frontier_scan(cfg: &SweepConfig, rows: &[SweepCellResult]) -> Vec<FrontierViolation> {
    let [ra, rb] = cfg.fixed_rail.varying();
    let (na, nb) = (cfg.grid_a.values().len(), cfg.grid_b.values().len());
    let mut out = Vec::new();
    let mut scan = |varying: Rail, line: Vec<usize>| {
        // Order the line from loosest to strictest.
        let line: Vec<usize> = if varying.larger_is_stricter() {
            line
        } else {
            line.into_iter().rev().collect()
        };
        let mut loose_clear: Option<usize> = None;
        for &k in &line {
            if !rows[k].found {
                loose_clear.get_or_insert(k);
            } else if let Some(l) = loose_clear {
                out.push(FrontierViolation {
                    varying,
                    loose_cell: l,
                    strict_cell: k,
                    z_norm: rows[k].z_norm,
                });
            }
        }
    };
    for b in 0..nb {
        scan(ra, (0..na).map(|a| a * nb + b).collect());
    }
    for a in 0..na {
        scan(rb, (0..nb).map(|b| a * nb + b).collect());
    }
    out
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), SweepError>
where
    F: FnOnce(&mut std::fs::File) -> std::io::Result<()>,
{
    let io = |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    body(tmp.as_file_mut()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), SweepError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        let err = |source| SweepError::Csv {
            path: path.to_path_buf(),
            source,
        };
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.serialize(r).map_err(err)?;
        }
        w.flush().map_err(|source| SweepError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    write_atomic(path, |f| f.write_all(&buf))
}

pub fn write_results_csv(path: &Path, rows: &[SweepCellResult]) -> Result<(), SweepError> {
    write_csv(path, &RESULTS_HEADER, rows)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<SweepCellResult>, SweepError> {
    let err = |source| SweepError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().collect::<Result<Vec<_>, _>>().map_err(err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeRegionRow {
    pub w: f64,
    pub dw: f64,
    #[serde(with = "bool_as_int")]
    pub safe: bool,
    /// Most violated bound, or `none` inside the region.
    pub binding: &'static str,
}

pub const SAFE_REGION_HEADER: [&str; 4] = ["w", "dw", "safe", "binding"];

/// `w` from 0.05 to 0.95 in steps of 0.005.
pub fn default_w_grid() -> Vec<f64> {
    (10..=190).map(|k| k as f64 * 0.005).collect()
}

/// `dw` from -0.02 to 0.02 in steps of 1e-4.
pub fn default_dw_grid() -> Vec<f64> {
    (-200..=200).map(|k| k as f64 * 1e-4).collect()
}

/// Evaluates the two-token safe region and writes one row per `(w, dw)`.
pub fn emit_safe_region(
    w_grid: &[f64],
    dw_grid: &[f64],
    gamma: f64,
    cap: f64,
    output_path: &Path,
) -> Result<Vec<SafeRegionRow>, SweepError> {
    let region = safe_region(w_grid, dw_grid, gamma, cap);
    let rows: Vec<SafeRegionRow> = region
        .cells()
        .map(|(w, dw, safe, binding)| SafeRegionRow {
            w,
            dw,
            safe,
            binding: binding.label(),
        })
        .collect();
    write_csv(output_path, &SAFE_REGION_HEADER, &rows)?;
    Ok(rows)
}
