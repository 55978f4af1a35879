//! Sparse direct solver: nested-dissection analysis, multifrontal
//! factorization with optional block low-rank compression and
//! mixed-precision storage, and blocked multi-RHS solves.

pub mod cluster;
pub mod compress;
pub mod dense;
pub mod numeric;
pub mod ordering;
pub mod precision;
pub mod scalar;
pub mod solve;
pub mod stats;
pub mod symbolic;
pub mod tiles;

pub use numeric::{FactorOptions, MultifrontalFactors};
pub use solve::{permute_rhs_columns, SolveOptions, SolveStats};
pub use stats::{append_stats_csv, read_stats_csv, Arithmetic, FactorMode, FactorizationStats, StatsRecord};
pub use symbolic::Symbolic;

use crate::discretize::ImpedanceMatrix;
use crate::sparse::{CscMatrix, DenseCols, SparseCols};
use crate::{HorstError, Result, C32, C64};
use std::sync::{Arc, Mutex};
use std::time::Instant;

/// Nested-dissection analysis of an operator on a regular grid whose
/// unknowns are numbered with x slowest and z fastest.
pub fn analyze_grid(pattern: &CscMatrix, dims: [usize; 3]) -> Result<Arc<Symbolic>> {
    if dims.iter().product::<usize>() != pattern.nrows {
        return Err(HorstError::invalid(format!(
            "grid {dims:?} does not match an operator with {} rows",
            pattern.nrows
        )));
    }
    let (_, tree) = ordering::nested_dissection(dims, ordering::DEFAULT_LEAF_SIZE)?;
    Ok(Arc::new(symbolic::symbolic_factorize(pattern, tree)?))
}

/// Analysis from the elimination tree of the pattern itself, without
/// geometry.
pub fn analyze_pattern(pattern: &CscMatrix) -> Result<Arc<Symbolic>> {
    let tree = ordering::EliminationTree::from_pattern(pattern)?;
    Ok(Arc::new(symbolic::symbolic_factorize(pattern, tree)?))
}

/// Factors in either working precision.
#[derive(Clone, Debug)]
pub enum Factorization {
    Single(MultifrontalFactors<C32>),
    Double(MultifrontalFactors<C64>),
}

impl Factorization {
    pub fn stats(&self) -> &FactorizationStats {
        match self {
            Factorization::Single(f) => f.stats(),
            Factorization::Double(f) => f.stats(),
        }
    }

    fn stats_mut(&mut self) -> &mut FactorizationStats {
        match self {
            Factorization::Single(f) => &mut f.stats,
            Factorization::Double(f) => &mut f.stats,
        }
    }

    pub fn symbolic(&self) -> &Symbolic {
        match self {
            Factorization::Single(f) => f.symbolic(),
            Factorization::Double(f) => f.symbolic(),
        }
    }

    pub fn n(&self) -> usize {
        self.symbolic().n()
    }

    /// Solves for sparse right-hand sides and records the work in the
    /// statistics.
    pub fn solve(&mut self, rhs: &SparseCols, opts: &SolveOptions) -> Result<(DenseCols, SolveStats)> {
        let (x, s) = match self {
            Factorization::Single(f) => f.solve(rhs, opts)?,
            Factorization::Double(f) => f.solve(rhs, opts)?,
        };
        let st = self.stats_mut();
        st.flops_solve += s.flops;
        st.t_solve += s.seconds;
        Ok((x, s))
    }

    /// Solves for dense right-hand sides; exact zeros are skipped.
    pub fn solve_dense(&mut self, rhs: &DenseCols, opts: &SolveOptions) -> Result<(DenseCols, SolveStats)> {
        self.solve(&sparsify(rhs), opts)
    }

    pub fn record(&self, freq_hz: f64, h_m: f64, nrhs: usize) -> StatsRecord {
        StatsRecord::new(self.stats(), freq_hz, h_m, nrhs)
    }
}

/// Drops exact zeros from dense columns.
pub fn sparsify(rhs: &DenseCols) -> SparseCols {
    let mut s = SparseCols::new(rhs.nrows);
    for j in 0..rhs.ncols {
        s.push(
            rhs.col(j)
                .iter()
                .enumerate()
                .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        );
    }
    s
}

/// Numeric factorization of `a` under a previous analysis.
pub fn factorize(a: &CscMatrix, sym: Arc<Symbolic>, opts: &FactorOptions) -> Result<Factorization> {
    opts.validate()?;
    Ok(match opts.arithmetic {
        Arithmetic::Single => Factorization::Single(numeric::factorize_numeric(a, sym, opts)?),
        Arithmetic::Double => Factorization::Double(numeric::factorize_numeric(a, sym, opts)?),
    })
}

/// Analysis and factorization of an assembled grid operator.
pub fn factorize_operator(op: &ImpedanceMatrix, opts: &FactorOptions) -> Result<Factorization> {
    factorize_operator_cached(op, opts, &SymbolicCache::default())
}

/// Keeps the last analysis and hands it out again for operators with the
/// same sparsity pattern.
#[derive(Debug, Default)]
pub struct SymbolicCache {
    slot: Mutex<Option<(Vec<usize>, Vec<usize>, Arc<Symbolic>)>>,
}

impl SymbolicCache {
    pub fn get_or_analyze(&self, op: &ImpedanceMatrix) -> Result<(Arc<Symbolic>, bool)> {
        let mut slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((colptr, rowidx, sym)) = slot.as_ref() {
            if *colptr == op.matrix.colptr && *rowidx == op.matrix.rowidx {
                return Ok((sym.clone(), true));
            }
        }
        let sym = analyze_grid(&op.matrix, op.grid.dims)?;
        *slot = Some((op.matrix.colptr.clone(), op.matrix.rowidx.clone(), sym.clone()));
        Ok((sym, false))
    }
}

/// Factorization reusing the cached analysis when the pattern matches.
pub fn factorize_operator_cached(op: &ImpedanceMatrix, opts: &FactorOptions, cache: &SymbolicCache) -> Result<Factorization> {
    opts.validate()?;
    let t0 = Instant::now();
    let (sym, _) = cache.get_or_analyze(op)?;
    let t_analysis = t0.elapsed().as_secs_f64();
    let mut f = factorize(&op.matrix, sym, opts)?;
    f.stats_mut().t_analysis = t_analysis;
    Ok(f)
}
