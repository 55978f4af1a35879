//! Factorization and solve statistics, and their CSV export.

use crate::{HorstError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Storage mode of the factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorMode {
    #[serde(rename = "FR")]
    Fr,
    #[serde(rename = "BLR")]
    Blr,
    #[serde(rename = "MP-BLR")]
    MpBlr,
}

impl fmt::Display for FactorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorMode::Fr => "FR",
            FactorMode::Blr => "BLR",
            FactorMode::MpBlr => "MP-BLR",
        })
    }
}

impl FromStr for FactorMode {
    type Err = HorstError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "FR" => Ok(FactorMode::Fr),
            "BLR" => Ok(FactorMode::Blr),
            "MP-BLR" | "MPBLR" | "MP" => Ok(FactorMode::MpBlr),
            _ => Err(HorstError::invalid(format!("unknown factorization mode `{s}` (expected FR, BLR or MP-BLR)"))),
        }
    }
}

/// Working precision of factorization and solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Single,
    Double,
}

impl FromStr for Arithmetic {
    type Err = HorstError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" | "32" | "fp32" | "c32" => Ok(Arithmetic::Single),
            "double" | "64" | "fp64" | "c64" => Ok(Arithmetic::Double),
            _ => Err(HorstError::invalid(format!("unknown arithmetic `{s}` (expected single or double)"))),
        }
    }
}

/// Tallies of one factorization; byte and flop counts are exact sums over
/// the operations performed and the storage kept.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorizationStats {
    pub mode: FactorMode,
    pub arithmetic: Arithmetic,
    pub eps_blr: f64,
    pub n_dof: usize,
    pub n_fronts: usize,
    pub max_front: usize,
    pub tree_depth: usize,
    /// Bytes of stored factors.
    pub factor_bytes: u64,
    /// Factor bytes a full-rank factorization would store.
    pub fr_factor_bytes: u64,
    /// Largest simultaneous footprint of factors, contribution blocks and
    /// the active front under the serial postorder schedule.
    pub peak_bytes: u64,
    pub flops_facto: u64,
    pub flops_solve: u64,
    pub t_analysis: f64,
    pub t_facto: f64,
    pub t_solve: f64,
    pub bytes_fp32: u64,
    pub bytes_fp24: u64,
    pub bytes_fp16: u64,
    pub dense_tiles: usize,
    pub lowrank_tiles: usize,
    /// Pivots accepted although they failed the threshold test against the
    /// full column (candidates are restricted to the fully-summed block).
    pub weak_pivots: usize,
}

/// One row of the stats CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub freq_hz: f64,
    pub h_m: f64,
    pub ndof: usize,
    pub mode: FactorMode,
    pub eps_blr: f64,
    pub mem_factors_bytes: u64,
    pub peak_mem_bytes: u64,
    pub t_analysis_s: f64,
    pub t_facto_s: f64,
    pub t_solve_s: f64,
    pub nrhs: usize,
    pub flops_facto: u64,
    pub flops_solve: u64,
    pub bytes_fp32: u64,
    pub bytes_fp24: u64,
    pub bytes_fp16: u64,
}

impl StatsRecord {
    pub fn new(stats: &FactorizationStats, freq_hz: f64, h_m: f64, nrhs: usize) -> Self {
        StatsRecord {
            freq_hz,
            h_m,
            ndof: stats.n_dof,
            mode: stats.mode,
            eps_blr: stats.eps_blr,
            mem_factors_bytes: stats.factor_bytes,
            peak_mem_bytes: stats.peak_bytes,
            t_analysis_s: stats.t_analysis,
            t_facto_s: stats.t_facto,
            t_solve_s: stats.t_solve,
            nrhs,
            flops_facto: stats.flops_facto,
            flops_solve: stats.flops_solve,
            bytes_fp32: stats.bytes_fp32,
            bytes_fp24: stats.bytes_fp24,
            bytes_fp16: stats.bytes_fp16,
        }
    }
}

/// Appends records to a stats CSV, writing the header when the file is new
/// or empty.
pub fn append_stats_csv(path: &Path, records: &[StatsRecord]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<StatsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

pub(crate) fn csv_error(e: csv::Error) -> HorstError {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HorstError::Io(io),
        other => HorstError::format(offset, format!("{other:?}")),
    }
}
