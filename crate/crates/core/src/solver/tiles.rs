//! Factor tiles in dense, low-rank or mixed-precision low-rank form, and the
//! products the factorization and the solves need from them.

use super::compress::LowRank;
use super::dense::{gemm, MatMut, MatRef};
use super::precision::MixedLowRank;
use super::scalar::Scalar;
use std::borrow::Cow;

#[derive(Clone, Debug)]
pub enum Tile<T> {
    Dense { nrows: usize, ncols: usize, data: Vec<T> },
    LowRank(LowRank<T>),
    Mixed(MixedLowRank),
}

/// Storage of one tile split by format: total bytes and the part held in
/// fp32, fp24 and fp16 components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TileBytes {
    pub total: u64,
    pub by_precision: [u64; 3],
}

impl std::ops::AddAssign for TileBytes {
    fn add_assign(&mut self, o: TileBytes) {
        self.total += o.total;
        for i in 0..3 {
            self.by_precision[i] += o.by_precision[i];
        }
    }
}

impl<T: Scalar> Tile<T> {
    pub fn dense_from(src: MatRef<'_, T>) -> Self {
        Tile::Dense {
            nrows: src.nrows(),
            ncols: src.ncols(),
            data: src.to_vec(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Tile::Dense { nrows, ncols, .. } => (*nrows, *ncols),
            Tile::LowRank(lr) => (lr.nrows, lr.ncols),
            Tile::Mixed(mp) => (mp.nrows, mp.ncols),
        }
    }

    pub fn is_low_rank(&self) -> bool {
        !matches!(self, Tile::Dense { .. })
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            Tile::Dense { .. } => None,
            Tile::LowRank(lr) => Some(lr.rank),
            Tile::Mixed(mp) => Some(mp.rank()),
        }
    }

    pub fn bytes(&self) -> TileBytes {
        let single = T::BYTES == 8;
        match self {
            Tile::Dense { data, .. } => {
                let total = (data.len() * T::BYTES) as u64;
                TileBytes {
                    total,
                    by_precision: [if single { total } else { 0 }, 0, 0],
                }
            }
            Tile::LowRank(lr) => {
                let total = lr.bytes();
                TileBytes {
                    total,
                    by_precision: [if single { total } else { 0 }, 0, 0],
                }
            }
            Tile::Mixed(mp) => {
                let by_precision = mp.bytes_by_precision();
                TileBytes {
                    total: by_precision.iter().sum(),
                    by_precision,
                }
            }
        }
    }

    /// Working-precision view of the tile.
    pub fn operand(&self) -> Operand<'_, T> {
        match self {
            Tile::Dense { nrows, ncols, data } => Operand::Dense(MatRef::from_slice(data, *nrows, *ncols, (*nrows).max(1))),
            Tile::LowRank(lr) => Operand::LowRank(Cow::Borrowed(lr)),
            Tile::Mixed(mp) => Operand::LowRank(Cow::Owned(mp.decode())),
        }
    }

    pub fn to_dense(&self) -> Vec<T> {
        match self {
            Tile::Dense { data, .. } => data.clone(),
            Tile::LowRank(lr) => lr.to_dense(),
            Tile::Mixed(mp) => mp.decode::<T>().to_dense(),
        }
    }
}

pub enum Operand<'a, T: Clone> {
    Dense(MatRef<'a, T>),
    LowRank(Cow<'a, LowRank<T>>),
}

fn minus_one<T: Scalar>() -> T {
    -T::one()
}

/// `out -= op * w`, or `out -= op^T * w` with `transpose`. Returns flops.
pub fn apply_sub<T: Scalar>(out: MatMut<'_, T>, op: &Operand<'_, T>, w: MatRef<'_, T>, transpose: bool) -> u64 {
    let nb = w.ncols();
    match op {
        Operand::Dense(d) => {
            let a = if transpose { d.transpose() } else { *d };
            gemm(out, a, w, minus_one(), true)
        }
        Operand::LowRank(lr) => {
            if lr.rank == 0 || nb == 0 {
                return 0;
            }
            // op = X Y^T, op^T = Y X^T.
            let (inner, outer) = if transpose { (lr.x_ref(), lr.y_ref()) } else { (lr.y_ref(), lr.x_ref()) };
            let mut tmp = vec![T::zero(); lr.rank * nb];
            let mut f = gemm(MatMut::from_slice(&mut tmp, lr.rank, nb, lr.rank), inner.transpose(), w, T::one(), false);
            f += gemm(out, outer, MatRef::from_slice(&tmp, lr.rank, nb, lr.rank), minus_one(), true);
            f
        }
    }
}

/// `out -= l * u` for tiles in any combination of forms. Returns flops.
pub fn update_sub<T: Scalar>(out: MatMut<'_, T>, l: &Operand<'_, T>, u: &Operand<'_, T>) -> u64 {
    match (l, u) {
        (Operand::Dense(a), Operand::Dense(b)) => gemm(out, *a, *b, minus_one(), true),
        (Operand::LowRank(a), Operand::Dense(b)) => {
            if a.rank == 0 {
                return 0;
            }
            let nc = b.ncols();
            let mut tmp = vec![T::zero(); a.rank * nc];
            let mut f = gemm(MatMut::from_slice(&mut tmp, a.rank, nc, a.rank), a.y_ref().transpose(), *b, T::one(), false);
            f += gemm(out, a.x_ref(), MatRef::from_slice(&tmp, a.rank, nc, a.rank), minus_one(), true);
            f
        }
        (Operand::Dense(a), Operand::LowRank(b)) => {
            if b.rank == 0 {
                return 0;
            }
            let nr = a.nrows();
            let mut tmp = vec![T::zero(); nr * b.rank];
            let mut f = gemm(MatMut::from_slice(&mut tmp, nr, b.rank, nr.max(1)), *a, b.x_ref(), T::one(), false);
            f += gemm(out, MatRef::from_slice(&tmp, nr, b.rank, nr.max(1)), b.y_ref().transpose(), minus_one(), true);
            f
        }
        (Operand::LowRank(a), Operand::LowRank(b)) => {
            if a.rank == 0 || b.rank == 0 {
                return 0;
            }
            let (r1, r2) = (a.rank, b.rank);
            let mut mid = vec![T::zero(); r1 * r2];
            let mut f = gemm(MatMut::from_slice(&mut mid, r1, r2, r1), a.y_ref().transpose(), b.x_ref(), T::one(), false);
            let mid = MatRef::from_slice(&mid, r1, r2, r1);
            if r1 <= r2 {
                let nc = b.ncols;
                let mut tmp = vec![T::zero(); r1 * nc];
                f += gemm(MatMut::from_slice(&mut tmp, r1, nc, r1), mid, b.y_ref().transpose(), T::one(), false);
                f += gemm(out, a.x_ref(), MatRef::from_slice(&tmp, r1, nc, r1), minus_one(), true);
            } else {
                let nr = a.nrows;
                let mut tmp = vec![T::zero(); nr * r2];
                f += gemm(MatMut::from_slice(&mut tmp, nr, r2, nr.max(1)), a.x_ref(), mid, T::one(), false);
                f += gemm(out, MatRef::from_slice(&tmp, nr, r2, nr.max(1)), b.y_ref().transpose(), minus_one(), true);
            }
            f
        }
    }
}
