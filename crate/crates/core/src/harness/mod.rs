//! Monte Carlo experiments and their reports.
//!
//! Paths are independent work items. Each one draws from its own RNG
//! stream keyed by `(seed, path index)` and writes into its own slot, and
//! all reductions run sequentially in index order afterwards, so the
//! worker count never changes a result.

mod coupled;
mod covariance;
mod flows;
pub mod stats;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use coupled::{convergence_experiment, regime_separation_experiment, ConvergenceSpec, RegimeSpec};
pub use covariance::{covariance_experiment, CovarianceSpec};
pub use flows::{
    cellular_experiment, divergence_map, turbophoresis_experiment, vortex_experiment, CellularSpec, DivergenceSpec,
    TurbophoresisSpec, VortexSpec,
};

/// Outcome of one fixed verdict rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    /// Reported for reference only.
    Info,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub param: String,
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub verdict: Verdict,
}

impl ReportRow {
    pub fn new(param: impl Into<String>, estimate: f64, stderr: f64, n: usize, verdict: Verdict) -> Self {
        Self {
            param: param.into(),
            estimate,
            stderr,
            n,
            verdict,
        }
    }
}

/// One CSV cell: integers print as such, floats with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    /// Printed verbatim; must not contain commas or newlines.
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:.16e}"),
            Cell::Text(v) => f.write_str(v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl DataTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub n_paths: usize,
    pub rows: Vec<ReportRow>,
    /// Paths aborted by a non-finite state, out of `total_paths` simulated.
    pub flagged: usize,
    pub total_paths: usize,
    pub data: DataTable,
    pub notes: Vec<String>,
}

/// Reports with more flagged paths than this are invalid.
pub const MAX_FLAGGED_FRACTION: f64 = 0.01;

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, n_paths: usize, data: DataTable) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            n_paths,
            rows: Vec::new(),
            flagged: 0,
            total_paths: 0,
            data,
            notes: Vec::new(),
        }
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.total_paths == 0 {
            0.0
        } else {
            self.flagged as f64 / self.total_paths as f64
        }
    }

    pub fn valid(&self) -> bool {
        self.flagged_fraction() < MAX_FLAGGED_FRACTION
    }

    /// Valid, and every row is `pass` or `info`.
    pub fn passed(&self) -> bool {
        self.valid()
            && self
                .rows
                .iter()
                .all(|r| matches!(r.verdict, Verdict::Pass | Verdict::Info))
    }

    pub fn row(&self, param: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.param == param)
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }
}

/// Maps `f` over `0..n` on a pool of `workers` threads and returns the
/// results in index order.
pub fn run_indexed<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n as u64).into_par_iter().map(&f).collect())
}

/// Independent master seed for a sub-experiment.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    seed ^ (tag.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub(crate) fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 paths, got {n_paths}")));
    }
    Ok(())
}

/// Indices `0 = j_0 < … < j_r = n_steps` of `n_records` evenly spaced
/// recording times.
pub(crate) fn record_steps(n_steps: usize, n_records: usize) -> Vec<usize> {
    let r = n_records.clamp(1, n_steps);
    let mut steps: Vec<usize> = (0..=r).map(|j| (j * n_steps) / r).collect();
    steps.dedup();
    steps
}
