//! Strided dense matrix views and the kernels used on frontal matrices.
//!
//! Views carry raw pointers so that disjoint blocks of one buffer can be
//! borrowed at the same time; every way of producing two mutable views
//! (`split_rows`, `split_cols`) hands out non-overlapping regions, which is
//! what makes the safe API sound.

use super::scalar::Scalar;
use crate::{HorstError, Result};
use std::marker::PhantomData;

/// Real flops charged for one complex multiply-add.
pub const CMA_FLOPS: u64 = 8;
/// Real flops charged for one complex division or reciprocal.
pub const CDIV_FLOPS: u64 = 8;

#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    ptr: *const T,
    nrows: usize,
    ncols: usize,
    rs: isize,
    cs: isize,
    _p: PhantomData<&'a T>,
}

pub struct MatMut<'a, T> {
    ptr: *mut T,
    nrows: usize,
    ncols: usize,
    rs: isize,
    cs: isize,
    _p: PhantomData<&'a mut T>,
}

unsafe impl<T: Sync> Send for MatRef<'_, T> {}
unsafe impl<T: Sync> Sync for MatRef<'_, T> {}
unsafe impl<T: Send> Send for MatMut<'_, T> {}
unsafe impl<T: Sync> Sync for MatMut<'_, T> {}

fn check_len(len: usize, nrows: usize, ncols: usize, ld: usize) {
    assert!(nrows <= ld || ncols <= 1, "leading dimension {ld} smaller than {nrows} rows");
    if nrows > 0 && ncols > 0 {
        assert!((ncols - 1) * ld + nrows <= len, "view {nrows}x{ncols} (ld {ld}) exceeds buffer of {len}");
    }
}

impl<'a, T: Copy> MatRef<'a, T> {
    /// Column-major view of `nrows x ncols` with leading dimension `ld`.
    pub fn from_slice(data: &'a [T], nrows: usize, ncols: usize, ld: usize) -> Self {
        check_len(data.len(), nrows, ncols, ld);
        MatRef {
            ptr: data.as_ptr(),
            nrows,
            ncols,
            rs: 1,
            cs: ld as isize,
            _p: PhantomData,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        assert!(i < self.nrows && j < self.ncols);
        // SAFETY: indices checked against the view bounds, which lie inside the buffer.
        unsafe { *self.ptr.offset(i as isize * self.rs + j as isize * self.cs) }
    }

    pub fn transpose(self) -> MatRef<'a, T> {
        MatRef {
            ptr: self.ptr,
            nrows: self.ncols,
            ncols: self.nrows,
            rs: self.cs,
            cs: self.rs,
            _p: PhantomData,
        }
    }

    pub fn sub(self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatRef<'a, T> {
        assert!(r0 + nr <= self.nrows && c0 + nc <= self.ncols, "sub-view out of range");
        MatRef {
            // SAFETY: the offset stays within the parent view.
            ptr: if nr == 0 || nc == 0 {
                self.ptr
            } else {
                unsafe { self.ptr.offset(r0 as isize * self.rs + c0 as isize * self.cs) }
            },
            nrows: nr,
            ncols: nc,
            rs: self.rs,
            cs: self.cs,
            _p: PhantomData,
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.nrows * self.ncols);
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

impl<'a, T: Copy> MatMut<'a, T> {
    pub fn from_slice(data: &'a mut [T], nrows: usize, ncols: usize, ld: usize) -> Self {
        check_len(data.len(), nrows, ncols, ld);
        MatMut {
            ptr: data.as_mut_ptr(),
            nrows,
            ncols,
            rs: 1,
            cs: ld as isize,
            _p: PhantomData,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rb(&self) -> MatRef<'_, T> {
        MatRef {
            ptr: self.ptr,
            nrows: self.nrows,
            ncols: self.ncols,
            rs: self.rs,
            cs: self.cs,
            _p: PhantomData,
        }
    }

    pub fn rb_mut(&mut self) -> MatMut<'_, T> {
        MatMut {
            ptr: self.ptr,
            nrows: self.nrows,
            ncols: self.ncols,
            rs: self.rs,
            cs: self.cs,
            _p: PhantomData,
        }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> isize {
        i as isize * self.rs + j as isize * self.cs
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        assert!(i < self.nrows && j < self.ncols);
        // SAFETY: bounds checked above.
        unsafe { *self.ptr.offset(self.offset(i, j)) }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(i < self.nrows && j < self.ncols);
        // SAFETY: bounds checked above; `self` is the unique view of this region.
        unsafe { *self.ptr.offset(self.offset(i, j)) = v }
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut T {
        assert!(i < self.nrows && j < self.ncols);
        // SAFETY: bounds checked above; `self` is the unique view of this region.
        unsafe { &mut *self.ptr.offset(self.offset(i, j)) }
    }

    /// Contiguous column, available for unit row stride.
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        assert!(self.rs == 1 && j < self.ncols);
        if self.nrows == 0 {
            return &mut [];
        }
        // SAFETY: unit row stride makes the column contiguous and inside the view.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.offset(j as isize * self.cs), self.nrows) }
    }

    pub fn split_rows(self, r: usize) -> (MatMut<'a, T>, MatMut<'a, T>) {
        assert!(r <= self.nrows);
        let top = MatMut {
            ptr: self.ptr,
            nrows: r,
            ncols: self.ncols,
            rs: self.rs,
            cs: self.cs,
            _p: PhantomData,
        };
        let bot = MatMut {
            ptr: if r == self.nrows || self.ncols == 0 {
                self.ptr
            } else {
                // SAFETY: row `r` exists in the view.
                unsafe { self.ptr.offset(r as isize * self.rs) }
            },
            nrows: self.nrows - r,
            ncols: self.ncols,
            rs: self.rs,
            cs: self.cs,
            _p: PhantomData,
        };
        (top, bot)
    }

    pub fn split_cols(self, c: usize) -> (MatMut<'a, T>, MatMut<'a, T>) {
        assert!(c <= self.ncols);
        let left = MatMut {
            ptr: self.ptr,
            nrows: self.nrows,
            ncols: c,
            rs: self.rs,
            cs: self.cs,
            _p: PhantomData,
        };
        let right = MatMut {
            ptr: if c == self.ncols || self.nrows == 0 {
                self.ptr
            } else {
                // SAFETY: column `c` exists in the view.
                unsafe { self.ptr.offset(c as isize * self.cs) }
            },
            nrows: self.nrows,
            ncols: self.ncols - c,
            rs: self.rs,
            cs: self.cs,
            _p: PhantomData,
        };
        (left, right)
    }

    pub fn sub(self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatMut<'a, T> {
        assert!(r0 + nr <= self.nrows && c0 + nc <= self.ncols, "sub-view out of range");
        MatMut {
            ptr: if nr == 0 || nc == 0 {
                self.ptr
            } else {
                // SAFETY: the offset stays within the parent view.
                unsafe { self.ptr.offset(self.offset(r0, c0)) }
            },
            nrows: nr,
            ncols: nc,
            rs: self.rs,
            cs: self.cs,
            _p: PhantomData,
        }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.ncols {
            let x = self.get(a, j);
            let y = self.get(b, j);
            self.set(a, j, y);
            self.set(b, j, x);
        }
    }

    pub fn fill(&mut self, v: T) {
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                self.set(i, j, v);
            }
        }
    }

    pub fn copy_from(&mut self, src: MatRef<'_, T>) {
        assert!(src.nrows == self.nrows && src.ncols == self.ncols);
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                self.set(i, j, src.get(i, j));
            }
        }
    }
}

/// `C = (accumulate ? C : 0) + alpha * A * B`; returns real flops.
pub fn gemm<T: Scalar>(c: MatMut<'_, T>, a: MatRef<'_, T>, b: MatRef<'_, T>, alpha: T, accumulate: bool) -> u64 {
    let (m, n, k) = (c.nrows, c.ncols, a.ncols);
    assert!(a.nrows == m && b.nrows == k && b.ncols == n, "gemm shape mismatch");
    if m == 0 || n == 0 {
        return 0;
    }
    if k == 0 {
        if !accumulate {
            let mut c = c;
            c.fill(T::zero());
        }
        return 0;
    }
    // SAFETY: the three views are in bounds; `c` is a unique mutable view so it
    // cannot alias `a` or `b`, which were produced from disjoint regions.
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            c.ptr,
            c.cs,
            c.rs,
            accumulate,
            a.ptr,
            a.cs,
            a.rs,
            b.ptr,
            b.cs,
            b.rs,
            T::one(),
            alpha,
            false,
            false,
            false,
            gemm::Parallelism::None,
        );
    }
    CMA_FLOPS * (m * n * k) as u64
}

const TRSM_BASE: usize = 32;

/// `B <- T^{-1} B` for lower-triangular `T`, unit diagonal if `unit`.
pub fn trsm_lower<T: Scalar>(t: MatRef<'_, T>, unit: bool, mut b: MatMut<'_, T>) -> u64 {
    let k = t.nrows;
    assert!(t.ncols == k && b.nrows == k);
    let n = b.ncols;
    if k == 0 || n == 0 {
        return 0;
    }
    if k <= TRSM_BASE {
        let mut flops = 0;
        for j in 0..n {
            for i in 0..k {
                let mut v = b.get(i, j);
                if !unit {
                    v = v / t.get(i, i);
                    b.set(i, j, v);
                    flops += CDIV_FLOPS;
                }
                for r in i + 1..k {
                    let cur = b.get(r, j);
                    b.set(r, j, cur - t.get(r, i) * v);
                }
                flops += CMA_FLOPS * (k - i - 1) as u64;
            }
        }
        return flops;
    }
    let k1 = k / 2;
    let (mut b1, b2) = b.split_rows(k1);
    let mut f = trsm_lower(t.sub(0, 0, k1, k1), unit, b1.rb_mut());
    let mut b2 = b2;
    f += gemm(b2.rb_mut(), t.sub(k1, 0, k - k1, k1), b1.rb(), -T::one(), true);
    f += trsm_lower(t.sub(k1, k1, k - k1, k - k1), unit, b2);
    f
}

/// `B <- T^{-1} B` for upper-triangular `T`, unit diagonal if `unit`.
pub fn trsm_upper<T: Scalar>(t: MatRef<'_, T>, unit: bool, mut b: MatMut<'_, T>) -> u64 {
    let k = t.nrows;
    assert!(t.ncols == k && b.nrows == k);
    let n = b.ncols;
    if k == 0 || n == 0 {
        return 0;
    }
    if k <= TRSM_BASE {
        let mut flops = 0;
        for j in 0..n {
            for i in (0..k).rev() {
                let mut v = b.get(i, j);
                if !unit {
                    v = v / t.get(i, i);
                    b.set(i, j, v);
                    flops += CDIV_FLOPS;
                }
                for r in 0..i {
                    let cur = b.get(r, j);
                    b.set(r, j, cur - t.get(r, i) * v);
                }
                flops += CMA_FLOPS * i as u64;
            }
        }
        return flops;
    }
    let k1 = k / 2;
    let (b1, mut b2) = b.split_rows(k1);
    let mut f = trsm_upper(t.sub(k1, k1, k - k1, k - k1), unit, b2.rb_mut());
    let mut b1 = b1;
    f += gemm(b1.rb_mut(), t.sub(0, k1, k1, k - k1), b2.rb(), -T::one(), true);
    f += trsm_upper(t.sub(0, 0, k1, k1), unit, b1);
    f
}

/// Outcome of a panel factorization.
pub struct PanelInfo {
    pub flops: u64,
    /// Pivots that failed the threshold test against the whole column.
    pub weak_pivots: usize,
}

const LU_BASE: usize = 16;

/// In-place LU with row pivoting of a tall panel. Candidate pivot rows are
/// the first `pivot_rows` rows; the remaining rows are only eliminated.
/// `ipiv[j]` receives the row swapped with row `j`. Threshold pivoting keeps
/// the diagonal when it is within `threshold` of the largest candidate.
pub fn panel_lu<T: Scalar>(
    mut panel: MatMut<'_, T>,
    pivot_rows: usize,
    threshold: f64,
    ipiv: &mut [usize],
) -> std::result::Result<PanelInfo, usize> {
    let w = panel.ncols;
    assert!(ipiv.len() == w && pivot_rows >= w && pivot_rows <= panel.nrows);
    if w <= LU_BASE {
        return panel_lu_unblocked(panel, pivot_rows, threshold, ipiv);
    }
    let w1 = w / 2;
    let (mut left, mut right) = panel.rb_mut().split_cols(w1);
    let (ip_left, ip_right) = ipiv.split_at_mut(w1);
    let mut info = panel_lu(left.rb_mut(), pivot_rows, threshold, ip_left)?;
    for (j, &p) in ip_left.iter().enumerate() {
        right.swap_rows(j, p);
    }
    let (l_top, l_bot) = left.split_rows(w1);
    let (mut r_top, r_bot) = right.split_rows(w1);
    info.flops += trsm_lower(l_top.rb(), true, r_top.rb_mut());
    let mut r_bot = r_bot;
    info.flops += gemm(r_bot.rb_mut(), l_bot.rb(), r_top.rb(), -T::one(), true);
    let sub = panel_lu(r_bot, pivot_rows - w1, threshold, ip_right).map_err(|c| c + w1)?;
    info.flops += sub.flops;
    info.weak_pivots += sub.weak_pivots;
    let mut l_bot = l_bot;
    for (j, p) in ip_right.iter_mut().enumerate() {
        l_bot.swap_rows(j, *p);
        *p += w1;
    }
    Ok(info)
}

fn panel_lu_unblocked<T: Scalar>(
    mut a: MatMut<'_, T>,
    pivot_rows: usize,
    threshold: f64,
    ipiv: &mut [usize],
) -> std::result::Result<PanelInfo, usize> {
    let (m, w) = (a.nrows, a.ncols);
    let mut flops = 0u64;
    let mut weak = 0usize;
    for j in 0..w {
        let mut best = j;
        let mut best_abs = 0.0f64;
        for i in j..pivot_rows {
            let v = a.get(i, j).abs();
            if v > best_abs {
                best_abs = v;
                best = i;
            }
        }
        if best_abs == 0.0 || !best_abs.is_finite() {
            return Err(j);
        }
        let diag = a.get(j, j).abs();
        let p = if diag >= threshold * best_abs { j } else { best };
        ipiv[j] = p;
        a.swap_rows(j, p);
        let piv = a.get(j, j);
        let col_max = (j..m).map(|i| a.get(i, j).abs()).fold(0.0, f64::max);
        if piv.abs() < threshold * col_max {
            weak += 1;
        }
        let inv = T::one() / piv;
        flops += CDIV_FLOPS;
        for i in j + 1..m {
            let v = a.get(i, j) * inv;
            a.set(i, j, v);
        }
        flops += CMA_FLOPS * (m - j - 1) as u64;
        for c in j + 1..w {
            let u = a.get(j, c);
            if u == T::zero() {
                continue;
            }
            for i in j + 1..m {
                let cur = a.get(i, c);
                a.set(i, c, cur - a.get(i, j) * u);
            }
            flops += CMA_FLOPS * (m - j - 1) as u64;
        }
    }
    Ok(PanelInfo { flops, weak_pivots: weak })
}

/// Dense LU solve of a small square system, used by tests and oracles.
pub fn dense_solve<T: Scalar>(a: &[T], n: usize, b: &mut [T]) -> Result<()> {
    let mut lu = a.to_vec();
    let mut ipiv = vec![0usize; n];
    panel_lu(MatMut::from_slice(&mut lu, n, n, n), n, 1.0, &mut ipiv)
        .map_err(|c| HorstError::Numeric(format!("singular dense matrix at column {c}")))?;
    for (j, &p) in ipiv.iter().enumerate() {
        b.swap(j, p);
    }
    let l = MatRef::from_slice(&lu, n, n, n);
    trsm_lower(l, true, MatMut::from_slice(b, n, 1, n));
    trsm_upper(l, false, MatMut::from_slice(b, n, 1, n));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn naive(m: usize, n: usize, k: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
        let mut c = vec![C64::new(0.0, 0.0); m * n];
        for j in 0..n {
            for l in 0..k {
                for i in 0..m {
                    c[i + j * m] += a[i + l * m] * b[l + j * k];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let (m, n, k) = (37, 21, 45);
        let a = random(m * k, 1);
        let b = random(k * n, 2);
        let want = naive(m, n, k, &a, &b);
        let mut c = vec![C64::new(0.0, 0.0); m * n];
        gemm(MatMut::from_slice(&mut c, m, n, m), MatRef::from_slice(&a, m, k, m), MatRef::from_slice(&b, k, n, k), C64::new(1.0, 0.0), false);
        assert!(c.iter().zip(&want).all(|(x, y)| (x - y).norm() < 1e-12));
        // Same product through stored transposes.
        let at: Vec<C64> = (0..m * k).map(|p| a[(p % k) * m + p / k]).collect();
        let bt: Vec<C64> = (0..k * n).map(|p| b[(p % n) * k + p / n]).collect();
        let mut c2 = vec![C64::new(0.0, 0.0); m * n];
        gemm(
            MatMut::from_slice(&mut c2, m, n, m),
            MatRef::from_slice(&at, k, m, k).transpose(),
            MatRef::from_slice(&bt, n, k, n).transpose(),
            C64::new(1.0, 0.0),
            false,
        );
        assert!(c2.iter().zip(&want).all(|(x, y)| (x - y).norm() < 1e-12));
    }

    #[test]
    fn lu_and_triangular_solves_roundtrip() {
        for n in [5, 40, 130] {
            let mut a = random(n * n, n as u64);
            for i in 0..n {
                a[i + i * n] += C64::new(0.1, 0.0);
            }
            let x: Vec<C64> = random(n, 99);
            let mut b = vec![C64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    b[i] += a[i + j * n] * x[j];
                }
            }
            dense_solve(&a, n, &mut b).unwrap();
            let err = b.iter().zip(&x).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} err={err}");
        }
    }

    #[test]
    fn restricted_pivoting_never_picks_border_rows() {
        let n = 40;
        let k = 24;
        let mut a = random(n * k, 5);
        // Make border rows dominant; they must not be chosen as pivots.
        for j in 0..k {
            for i in k..n {
                a[i + j * n] = a[i + j * n] * 100.0;
            }
        }
        let mut ipiv = vec![0; k];
        panel_lu(MatMut::from_slice(&mut a, n, k, n), k, 0.01, &mut ipiv).unwrap();
        assert!(ipiv.iter().enumerate().all(|(j, &p)| p >= j && p < k));
    }

    #[test]
    fn singular_panel_reports_column() {
        let n = 6;
        let mut a = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            a[i + i * n] = C64::new(1.0, 0.0);
        }
        a[3 + 3 * n] = C64::new(0.0, 0.0);
        let mut ipiv = vec![0; n];
        assert_eq!(panel_lu(MatMut::from_slice(&mut a, n, n, n), n, 0.01, &mut ipiv).err(), Some(3));
    }
}
