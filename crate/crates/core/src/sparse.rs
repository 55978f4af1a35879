//! Sparse matrix and multi-column right-hand-side containers.

use crate::{HorstError, Result, C64};
use std::io::Write;
use std::path::Path;

/// Compressed sparse column matrix with sorted row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<C64>,
}

impl CscMatrix {
    /// Builds from triplets; duplicates are summed and rows sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, C64)]) -> Result<Self> {
        let mut counts = vec![0usize; ncols + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(HorstError::invalid(format!("triplet ({r}, {c}) outside {nrows}x{ncols}")));
            }
            counts[c + 1] += 1;
        }
        for j in 0..ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut tmp = vec![(0usize, C64::new(0.0, 0.0)); triplets.len()];
        for &(r, c, v) in triplets {
            tmp[next[c]] = (r, v);
            next[c] += 1;
        }
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for j in 0..ncols {
            let col = &mut tmp[counts[j]..counts[j + 1]];
            col.sort_by_key(|e| e.0);
            for &(r, v) in col.iter() {
                if rowidx.len() > colptr[j] && *rowidx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    rowidx.push(r);
                    values.push(v);
                }
            }
            colptr[j + 1] = rowidx.len();
        }
        Ok(CscMatrix {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    pub fn col(&self, j: usize) -> (&[usize], &[C64]) {
        let r = self.colptr[j]..self.colptr[j + 1];
        (&self.rowidx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (rows, vals) = self.col(j);
        match rows.binary_search(&i) {
            Ok(p) => vals[p],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.rowidx {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut rowidx = vec![0usize; self.nnz()];
        let mut values = vec![C64::new(0.0, 0.0); self.nnz()];
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let r = self.rowidx[p];
                rowidx[next[r]] = j;
                values[next[r]] = self.values[p];
                next[r] += 1;
            }
        }
        CscMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            colptr: counts,
            rowidx,
            values,
        }
    }

    /// y = A x
    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == C64::new(0.0, 0.0) {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowidx[p]] += self.values[p] * xj;
            }
        }
        y
    }

    /// y = A^T x (no conjugation)
    pub fn matvec_transpose(&self, x: &[C64]) -> Vec<C64> {
        (0..self.ncols)
            .map(|j| {
                (self.colptr[j]..self.colptr[j + 1])
                    .map(|p| self.values[p] * x[self.rowidx[p]])
                    .sum()
            })
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0f64; self.nrows];
        for (p, &r) in self.rowidx.iter().enumerate() {
            rows[r] += self.values[p].norm();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        t.colptr == self.colptr && t.rowidx == self.rowidx
    }

    /// Writes `row col re im` lines, zero-based, one entry per line.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let v = self.values[p];
                writeln!(out, "{} {} {:.17e} {:.17e}", self.rowidx[p], j, v.re, v.im)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Parses the format written by [`CscMatrix::write_triplets`].
    pub fn read_triplets(path: &Path) -> Result<CscMatrix> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| HorstError::format(0, "empty triplet file"))?;
        let dims: Vec<usize> = header
            .trim_start_matches('#')
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| HorstError::format(0, "bad triplet header")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(HorstError::format(0, "bad triplet header"));
        }
        let mut offset = header.len() as u64 + 1;
        let mut trips = Vec::with_capacity(dims[2]);
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            let bad = || HorstError::format(offset, format!("bad triplet line `{line}`"));
            if t.len() != 4 {
                return Err(bad());
            }
            let r: usize = t[0].parse().map_err(|_| bad())?;
            let c: usize = t[1].parse().map_err(|_| bad())?;
            let re: f64 = t[2].parse().map_err(|_| bad())?;
            let im: f64 = t[3].parse().map_err(|_| bad())?;
            trips.push((r, c, C64::new(re, im)));
            offset += line.len() as u64 + 1;
        }
        CscMatrix::from_triplets(dims[0], dims[1], &trips)
    }
}

/// Sparse multi-column right-hand side: one list of (row, value) per column.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseCols {
    pub nrows: usize,
    pub cols: Vec<Vec<(usize, C64)>>,
}

impl SparseCols {
    pub fn new(nrows: usize) -> Self {
        SparseCols { nrows, cols: Vec::new() }
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn push(&mut self, col: Vec<(usize, C64)>) {
        self.cols.push(col);
    }

    pub fn to_dense(&self) -> DenseCols {
        let mut d = DenseCols::zeros(self.nrows, self.ncols());
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                d.col_mut(j)[i] += v;
            }
        }
        d
    }

    /// Column subset in the given order.
    pub fn select(&self, order: &[usize]) -> SparseCols {
        SparseCols {
            nrows: self.nrows,
            cols: order.iter().map(|&j| self.cols[j].clone()).collect(),
        }
    }
}

/// Dense column-major block of vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseCols {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<C64>,
}

impl DenseCols {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseCols {
            nrows,
            ncols,
            data: vec![C64::new(0.0, 0.0); nrows * ncols],
        }
    }

    pub fn from_col(v: Vec<C64>) -> Self {
        DenseCols {
            nrows: v.len(),
            ncols: 1,
            data: v,
        }
    }

    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn max_abs_diff(&self, other: &DenseCols) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Scaled residual ||A x - b||_inf / (||A||_inf ||x||_inf + ||b||_inf).
pub fn scaled_residual(a: &CscMatrix, x: &[C64], b: &[C64]) -> f64 {
    let ax = a.matvec(x);
    let r = ax.iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
    let xn = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let bn = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    r / (a.norm_inf() * xn + bn)
}
