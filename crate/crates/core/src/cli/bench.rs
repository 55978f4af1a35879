//! Solver scaling benchmark on Helmholtz cubes.

use super::config::BenchConfig;
use crate::discretize::{assemble_operator, AssembleOptions, ImpedanceMatrix, PmlConfig};
use crate::model::{Grid, VtiModel};
use crate::solver::{analyze_grid, factorize, Arithmetic, FactorMode, FactorOptions, SolveOptions, StatsRecord};
use crate::sparse::{scaled_residual, SparseCols};
use crate::{HorstError, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Homogeneous lossless cube of `n^3` nodes with absorbing layers on all six
/// faces, at the frequency giving `ppw` points per wavelength.
pub fn helmholtz_cube(n: usize, h: f64, velocity: f64, ppw: f64, pml_width: usize) -> Result<ImpedanceMatrix> {
    let grid = Grid::cubic([n, n, n], h)?;
    let model = VtiModel::homogeneous(grid, velocity, 2000.0)?;
    let opts = AssembleOptions {
        pml: PmlConfig {
            width: pml_width,
            six_faces: true,
            ..Default::default()
        },
        ..Default::default()
    };
    let freq = velocity / (ppw * h);
    assemble_operator(&model, C64::new(2.0 * PI * freq, 0.0), &opts)
}

/// `count` point sources packed into a small block of the first octant.
pub fn clustered_sources(grid: &Grid, count: usize) -> SparseCols {
    let side = (count as f64).cbrt().ceil() as usize;
    let d = grid.dims;
    let start = [d[0] / 4, d[1] / 4, d[2] / 4];
    let mut rhs = SparseCols::new(grid.len());
    'outer: for a in 0..side {
        for b in 0..side {
            for c in 0..side {
                if rhs.cols.len() == count {
                    break 'outer;
                }
                let ix = (start[0] + a).min(d[0] - 1);
                let iy = (start[1] + b).min(d[1] - 1);
                let iz = (start[2] + c).min(d[2] - 1);
                rhs.push(vec![(grid.index(ix, iy, iz), C64::new(1.0, 0.0))]);
            }
        }
    }
    rhs
}

/// Least-squares slope of `log y` against `log n`.
pub fn fit_exponent(n: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = n
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub mode: FactorMode,
    pub eps_blr: f64,
    pub flops_exponent: Option<f64>,
    pub bytes_exponent: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub record: StatsRecord,
    pub residual: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub fits: Vec<ExponentFit>,
    /// Sizes and modes that could not run, with the reason.
    pub skipped: Vec<(usize, FactorMode, String)>,
}

fn mem_available() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Factorizes every size in every mode, solves a clustered sparse right-hand
/// side and fits complexity exponents per mode. A failing row is reported
/// and the run continues.
pub fn bench_scaling(cfg: &BenchConfig, deterministic: bool, mut on_row: impl FnMut(&BenchRow)) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    let budget = cfg.max_factor_bytes.or_else(|| mem_available().map(|m| m / 10 * 8));
    let entry_bytes: u64 = match cfg.arithmetic {
        Arithmetic::Single => 8,
        Arithmetic::Double => 16,
    };
    for &n in &cfg.n {
        let op = helmholtz_cube(n, cfg.h, cfg.velocity, cfg.ppw, cfg.pml_width)?;
        let sym = analyze_grid(&op.matrix, op.grid.dims)?;
        let predicted = sym.fr_entries * entry_bytes;
        let rhs = clustered_sources(&op.grid, cfg.nrhs);
        let freq = cfg.velocity / (cfg.ppw * cfg.h);
        for &mode in &cfg.modes {
            let eps_list: Vec<f64> = if mode == FactorMode::Fr { vec![0.0] } else { cfg.eps.clone() };
            for eps in eps_list {
                if let Some(b) = budget {
                    if predicted > b {
                        let why = format!("predicted {predicted} factor bytes exceed the budget of {b}");
                        log::warn!("n={n} {mode}: {why}");
                        report.skipped.push((n, mode, why));
                        continue;
                    }
                }
                let arithmetic = if mode == FactorMode::MpBlr { Arithmetic::Single } else { cfg.arithmetic };
                let opts = FactorOptions {
                    mode,
                    arithmetic,
                    eps_blr: if mode == FactorMode::Fr { FactorOptions::default().eps_blr } else { eps },
                    deterministic,
                    ..Default::default()
                };
                let run = || -> Result<BenchRow> {
                    let mut f = factorize(&op.matrix, sym.clone(), &opts)?;
                    let (x, _) = f.solve(&rhs, &SolveOptions::default())?;
                    let b = rhs.to_dense();
                    let residual = (0..x.ncols)
                        .map(|j| scaled_residual(&op.matrix, x.col(j), b.col(j)))
                        .fold(0.0, f64::max);
                    Ok(BenchRow {
                        n,
                        record: f.record(freq, cfg.h, rhs.cols.len()),
                        residual,
                    })
                };
                match run() {
                    Ok(row) => {
                        on_row(&row);
                        report.rows.push(row);
                    }
                    Err(e @ (HorstError::InvalidInput(_) | HorstError::Config { .. })) => return Err(e),
                    Err(e) => {
                        log::warn!("n={n} {mode}: {e}");
                        report.skipped.push((n, mode, e.to_string()));
                    }
                }
            }
        }
    }
    let mut keys: Vec<(FactorMode, f64)> = Vec::new();
    for r in &report.rows {
        let k = (r.record.mode, r.record.eps_blr);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (mode, eps) in keys {
        let rows: Vec<&BenchRow> = report
            .rows
            .iter()
            .filter(|r| r.record.mode == mode && r.record.eps_blr == eps)
            .collect();
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let flops: Vec<f64> = rows.iter().map(|r| r.record.flops_facto as f64).collect();
        let bytes: Vec<f64> = rows.iter().map(|r| r.record.mem_factors_bytes as f64).collect();
        report.fits.push(ExponentFit {
            mode,
            eps_blr: eps,
            flops_exponent: fit_exponent(&ns, &flops),
            bytes_exponent: fit_exponent(&ns, &bytes),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_a_power_law_is_exact() {
        let n = [16.0, 24.0, 32.0];
        let y: Vec<f64> = n.iter().map(|v: &f64| 3.0 * v.powf(5.5)).collect();
        assert!((fit_exponent(&n, &y).unwrap() - 5.5).abs() < 1e-12);
        assert!(fit_exponent(&[16.0], &[1.0]).is_none());
    }

    #[test]
    fn clustered_sources_are_distinct_points() {
        let g = Grid::cubic([16, 16, 16], 25.0).unwrap();
        let s = clustered_sources(&g, 64);
        assert_eq!(s.cols.len(), 64);
        let mut rows: Vec<usize> = s.cols.iter().map(|c| c[0].0).collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 64);
    }

    #[test]
    fn small_full_rank_row_matches_symbolic_prediction() {
        let cfg = BenchConfig {
            n: vec![12],
            modes: vec![FactorMode::Fr],
            arithmetic: Arithmetic::Double,
            pml_width: 0,
            ..Default::default()
        };
        let rep = bench_scaling(&cfg, true, |_| {}).unwrap();
        assert_eq!(rep.rows.len(), 1);
        let r = &rep.rows[0];
        let op = helmholtz_cube(12, 25.0, 2000.0, 4.0, 0).unwrap();
        let sym = analyze_grid(&op.matrix, op.grid.dims).unwrap();
        assert_eq!(r.record.mem_factors_bytes, sym.fr_entries * 16);
        assert!(r.residual < 1e-12);
        assert_eq!(r.record.nrhs, 64);
    }
}
