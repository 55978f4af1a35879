//! Low-rank compression of dense blocks by truncated column-pivoted QR.

use super::dense::{MatRef, CMA_FLOPS};
use super::scalar::Scalar;

/// Low-rank pair with `B ~ X Y^T`; `x` is `nrows x rank`, `y` is
/// `ncols x rank`, both column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRank<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub rank: usize,
    pub x: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Scalar> LowRank<T> {
    pub fn bytes(&self) -> u64 {
        ((self.nrows + self.ncols) * self.rank * T::BYTES) as u64
    }

    pub fn x_ref(&self) -> MatRef<'_, T> {
        MatRef::from_slice(&self.x, self.nrows, self.rank, self.nrows.max(1))
    }

    pub fn y_ref(&self) -> MatRef<'_, T> {
        MatRef::from_slice(&self.y, self.ncols, self.rank, self.ncols.max(1))
    }

    /// Dense `X Y^T`, column-major.
    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.nrows * self.ncols];
        for c in 0..self.ncols {
            for i in 0..self.rank {
                let yv = self.y[c + i * self.ncols];
                for r in 0..self.nrows {
                    out[r + c * self.nrows] += self.x[r + i * self.nrows] * yv;
                }
            }
        }
        out
    }
}

/// Outcome of compressing one block.
#[derive(Clone, Debug)]
pub enum Compressed<T> {
    LowRank(LowRank<T>),
    /// Truncation did not reach half the smaller dimension; keep it dense.
    FullRank,
}

/// Truncated column-pivoted QR of `b`. Stops as soon as the Frobenius norm
/// of the unreduced trailing block is at most `eps * ||b||_F`, so that
/// `||b - X Y^T||_F <= eps ||b||_F`. Returns the outcome and real flops.
pub fn compress_block<T: Scalar>(b: MatRef<'_, T>, eps: f64) -> (Compressed<T>, u64) {
    let (m, n) = (b.nrows(), b.ncols());
    let mut a = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut flops = 0u64;
    let mut col_norm2: Vec<f64> = (0..n).map(|c| a[c * m..(c + 1) * m].iter().map(|v| v.abs2()).sum()).collect();
    flops += 4 * (m * n) as u64;
    let total: f64 = col_norm2.iter().sum();
    let tol2 = eps * eps * total;
    let limit = m.min(n).div_ceil(2);
    let mut taus: Vec<f64> = Vec::new();
    let mut betas: Vec<T> = Vec::new();
    let mut rank = if m == 0 || n == 0 { Some(0) } else { None };
    for j in 0..limit {
        if rank.is_some() {
            break;
        }
        let trailing: f64 = col_norm2[j..].iter().sum();
        if trailing <= tol2 {
            rank = Some(j);
            break;
        }
        let mut pc = j;
        for c in j + 1..n {
            if col_norm2[c] > col_norm2[pc] {
                pc = c;
            }
        }
        if pc != j {
            for r in 0..m {
                a.swap(r + j * m, r + pc * m);
            }
            perm.swap(j, pc);
            col_norm2.swap(j, pc);
        }
        // Hermitian reflector I - tau u u^H mapping column j onto beta e_j.
        let col = j * m;
        let xnorm = a[col + j..col + m].iter().map(|v| v.abs2()).sum::<f64>().sqrt();
        let x0 = a[col + j];
        let phase = if x0.abs() > 0.0 { x0.scale(1.0 / x0.abs()) } else { T::one() };
        let beta = -(phase.scale(xnorm));
        a[col + j] = x0 - beta;
        let unorm2: f64 = a[col + j..col + m].iter().map(|v| v.abs2()).sum();
        let tau = if unorm2 > 0.0 { 2.0 / unorm2 } else { 0.0 };
        flops += 8 * (m - j) as u64;
        for c in j + 1..n {
            let cc = c * m;
            let mut s = T::zero();
            for r in j..m {
                s += a[col + r].conj() * a[cc + r];
            }
            let s = s.scale(tau);
            for r in j..m {
                let u = a[col + r];
                a[cc + r] -= s * u;
            }
            col_norm2[c] = a[cc + j + 1..cc + m].iter().map(|v| v.abs2()).sum();
        }
        flops += (2 * CMA_FLOPS + 4) * ((m - j) * (n - j - 1)) as u64;
        taus.push(tau);
        // The reflector stays in column j; R(j,j) is kept separately.
        col_norm2[j] = 0.0;
        betas.push(beta);
    }
    let Some(r) = rank else {
        return (Compressed::FullRank, flops);
    };
    // X = H_0 ... H_{r-1} [I_r; 0].
    let mut x = vec![T::zero(); m * r];
    for i in 0..r {
        x[i + i * m] = T::one();
    }
    for i in (0..r).rev() {
        let col = i * m;
        for c in i..r {
            let cc = c * m;
            let mut s = T::zero();
            for row in i..m {
                s += a[col + row].conj() * x[cc + row];
            }
            let s = s.scale(taus[i]);
            for row in i..m {
                x[cc + row] -= s * a[col + row];
            }
        }
        flops += 2 * CMA_FLOPS * ((m - i) * (r - i)) as u64;
    }
    // Y^T = R_r P^T.
    let mut y = vec![T::zero(); n * r];
    for c in 0..n {
        for i in 0..r.min(c + 1) {
            let v = if i == c { betas[i] } else { a[i + c * m] };
            y[perm[c] + i * n] = v;
        }
    }
    (
        Compressed::LowRank(LowRank {
            nrows: m,
            ncols: n,
            rank: r,
            x,
            y,
        }),
        flops,
    )
}
