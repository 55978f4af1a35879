//! Forward and backward substitution with the multifrontal factors, for
//! blocks of sparse right-hand sides.

use super::dense::{trsm_lower, trsm_upper, MatMut};
use super::numeric::{FrontFactor, MultifrontalFactors};
use super::scalar::Scalar;
use super::symbolic::{FrontStructure, Symbolic};
use super::tiles::apply_sub;
use crate::sparse::{DenseCols, SparseCols};
use crate::{HorstError, Result, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const DEFAULT_BLOCK_SIZE: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Right-hand sides solved together.
    pub block_size: usize,
    /// Skip fronts the forward phase provably leaves at zero.
    pub prune: bool,
    /// Group right-hand sides with nearby support into the same block.
    pub permute: bool,
    /// Solve with the transposed operator.
    pub transpose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            block_size: DEFAULT_BLOCK_SIZE,
            prune: true,
            permute: true,
            transpose: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nrhs: usize,
    /// Fronts visited by the forward phase of each block.
    pub visits: Vec<usize>,
    pub visits_total: usize,
    /// Forward visits without pruning: blocks times fronts.
    pub visits_unpruned: usize,
    pub flops: u64,
    pub seconds: f64,
}

/// Virtual node standing above every root of a forest.
fn column_lca(sym: &Symbolic, col: &[(usize, C64)]) -> Option<usize> {
    let top = sym.tree.len();
    let mut acc: Option<usize> = None;
    for &(r, _) in col {
        let node = sym.node_of[sym.iperm[r]];
        acc = Some(match acc {
            None => node,
            Some(a) if a == top => top,
            Some(a) => sym.tree.lca(a, node).unwrap_or(top),
        });
    }
    acc
}

fn block_lca(sym: &Symbolic, a: usize, b: usize) -> usize {
    let top = sym.tree.len();
    if a == top || b == top {
        top
    } else {
        sym.tree.lca(a, b).unwrap_or(top)
    }
}

fn dofs_below(sym: &Symbolic, node: usize) -> usize {
    if node == sym.tree.len() {
        usize::MAX
    } else {
        sym.tree.subtree_dofs(node)
    }
}

fn check_rows(rhs: &SparseCols, n: usize) -> Result<()> {
    if rhs.nrows != n {
        return Err(HorstError::invalid(format!("right-hand sides have {} rows, operator has {n}", rhs.nrows)));
    }
    for (j, col) in rhs.cols.iter().enumerate() {
        if let Some(&(r, _)) = col.iter().find(|e| e.0 >= n) {
            return Err(HorstError::invalid(format!("right-hand side {j} has row {r} outside 0..{n}")));
        }
    }
    Ok(())
}

/// Column order and block boundaries grouping right-hand sides whose
/// support shares a low common ancestor in the elimination tree. Columns
/// without nonzeros are placed last.
fn order_columns(rhs: &SparseCols, sym: &Symbolic, block_size: usize) -> (Vec<usize>, Vec<usize>) {
    let bs = block_size.max(1);
    let empty_key = sym.tree.len() + 1;
    let keys: Vec<usize> = rhs.cols.iter().map(|c| column_lca(sym, c).unwrap_or(empty_key)).collect();
    let mut order: Vec<usize> = (0..rhs.ncols()).collect();
    order.sort_by_key(|&j| keys[j]);
    let n = order.len();
    let mut starts = Vec::new();
    let mut s = 0;
    while s < n {
        starts.push(s);
        if n - s <= bs {
            break;
        }
        // Cut where the block's common ancestor is lowest, latest on ties.
        let mut lca = keys[order[s]].min(sym.tree.len());
        let mut best = (usize::MAX, s + bs);
        for p in s + 1..=s + bs {
            let key = keys[order[p - 1]].min(sym.tree.len());
            lca = block_lca(sym, lca, key);
            if p > s + bs / 2 {
                let d = dofs_below(sym, lca);
                if d <= best.0 {
                    best = (d, p);
                }
            }
        }
        s = best.1;
    }
    starts.push(n);
    (order, starts)
}

/// Order in which right-hand sides are grouped into solve blocks.
pub fn permute_rhs_columns(rhs: &SparseCols, sym: &Symbolic, block_size: usize) -> Result<Vec<usize>> {
    check_rows(rhs, sym.n())?;
    if let Some(j) = rhs.cols.iter().position(|c| c.is_empty()) {
        return Err(HorstError::invalid(format!("right-hand side {j} has no nonzeros")));
    }
    Ok(order_columns(rhs, sym, block_size).0)
}

fn gather<T: Scalar>(w: &[T], n: usize, nb: usize, fr: &FrontStructure, y: &mut Vec<T>) {
    let (k, m) = (fr.k(), fr.m());
    y.clear();
    y.resize(m * nb, T::zero());
    for j in 0..nb {
        let col = &w[j * n..(j + 1) * n];
        y[j * m..j * m + k].copy_from_slice(&col[fr.start..fr.end]);
        for (p, &g) in fr.border.iter().enumerate() {
            y[j * m + k + p] = col[g];
        }
    }
}

fn scatter<T: Scalar>(w: &mut [T], n: usize, nb: usize, fr: &FrontStructure, y: &[T], with_border: bool) {
    let (k, m) = (fr.k(), fr.m());
    for j in 0..nb {
        let col = &mut w[j * n..(j + 1) * n];
        col[fr.start..fr.end].copy_from_slice(&y[j * m..j * m + k]);
        if with_border {
            for (p, &g) in fr.border.iter().enumerate() {
                col[g] = y[j * m + k + p];
            }
        }
    }
}

fn forward_l<T: Scalar>(ff: &FrontFactor<T>, y: &mut [T], m: usize, nb: usize) -> u64 {
    let mut flops = 0;
    for bc in &ff.cols {
        let (e0, e1, w) = (bc.e0, bc.e1, bc.width());
        let mut ym = MatMut::from_slice(y, m, nb, m);
        for (j, &p) in bc.ipiv.iter().enumerate() {
            if p != j {
                ym.swap_rows(e0 + j, e0 + p);
            }
        }
        flops += trsm_lower(bc.diag_ref(), true, ym.sub(e0, 0, w, nb));
        let (top, mut bottom) = MatMut::from_slice(y, m, nb, m).split_rows(e1);
        let x = top.rb().sub(e0, 0, w, nb);
        for (r0, r1, t) in &bc.lower {
            flops += apply_sub(bottom.rb_mut().sub(r0 - e1, 0, r1 - r0, nb), &t.operand(), x, false);
        }
    }
    flops
}

fn backward_u<T: Scalar>(ff: &FrontFactor<T>, y: &mut [T], m: usize, nb: usize) -> u64 {
    let mut flops = 0;
    for bc in ff.cols.iter().rev() {
        let (e0, e1, w) = (bc.e0, bc.e1, bc.width());
        let (top, bottom) = MatMut::from_slice(y, m, nb, m).split_rows(e1);
        let mut xk = top.sub(e0, 0, w, nb);
        for (c0, c1, t) in &bc.upper {
            flops += apply_sub(xk.rb_mut(), &t.operand(), bottom.rb().sub(c0 - e1, 0, c1 - c0, nb), false);
        }
        flops += trsm_upper(bc.diag_ref(), false, xk);
    }
    flops
}

fn forward_ut<T: Scalar>(ff: &FrontFactor<T>, y: &mut [T], m: usize, nb: usize) -> u64 {
    let mut flops = 0;
    for bc in &ff.cols {
        let (e0, e1, w) = (bc.e0, bc.e1, bc.width());
        let (top, mut bottom) = MatMut::from_slice(y, m, nb, m).split_rows(e1);
        let mut xk = top.sub(e0, 0, w, nb);
        flops += trsm_lower(bc.diag_ref().transpose(), false, xk.rb_mut());
        for (c0, c1, t) in &bc.upper {
            flops += apply_sub(bottom.rb_mut().sub(c0 - e1, 0, c1 - c0, nb), &t.operand(), xk.rb(), true);
        }
    }
    flops
}

fn backward_lt<T: Scalar>(ff: &FrontFactor<T>, y: &mut [T], m: usize, nb: usize) -> u64 {
    let mut flops = 0;
    for bc in ff.cols.iter().rev() {
        let (e0, e1, w) = (bc.e0, bc.e1, bc.width());
        {
            let (top, bottom) = MatMut::from_slice(y, m, nb, m).split_rows(e1);
            let mut xk = top.sub(e0, 0, w, nb);
            for (r0, r1, t) in &bc.lower {
                flops += apply_sub(xk.rb_mut(), &t.operand(), bottom.rb().sub(r0 - e1, 0, r1 - r0, nb), true);
            }
            flops += trsm_upper(bc.diag_ref().transpose(), true, xk);
        }
        let mut ym = MatMut::from_slice(y, m, nb, m);
        for (j, &p) in bc.ipiv.iter().enumerate().rev() {
            if p != j {
                ym.swap_rows(e0 + j, e0 + p);
            }
        }
    }
    flops
}

struct BlockOutput {
    x: Vec<C64>,
    nb: usize,
    visits: usize,
    flops: u64,
}

impl<T: Scalar> MultifrontalFactors<T> {
    fn solve_block(&self, cols: &[&Vec<(usize, C64)>], opts: &SolveOptions) -> BlockOutput {
        let sym = &*self.sym;
        let tree = &sym.tree;
        let n = sym.n();
        let nb = cols.len();
        let nn = tree.len();
        let mut w = vec![T::zero(); n * nb];
        let mut active = vec![!opts.prune; nn];
        for (j, col) in cols.iter().enumerate() {
            for &(r, v) in col.iter() {
                let i = sym.iperm[r];
                w[i + j * n] += T::from_c64(v);
                let mut p = Some(sym.node_of[i]);
                while let Some(x) = p {
                    if active[x] {
                        break;
                    }
                    active[x] = true;
                    p = tree.nodes[x].parent;
                }
            }
        }
        let mut y = Vec::new();
        let mut flops = 0;
        let mut visits = 0;
        for id in (0..nn).filter(|&id| active[id]) {
            let fr = &sym.fronts[id];
            gather(&w, n, nb, fr, &mut y);
            flops += if opts.transpose {
                forward_ut(&self.fronts[id], &mut y, fr.m(), nb)
            } else {
                forward_l(&self.fronts[id], &mut y, fr.m(), nb)
            };
            scatter(&mut w, n, nb, fr, &y, true);
            visits += 1;
        }
        for id in (0..nn).rev() {
            let fr = &sym.fronts[id];
            gather(&w, n, nb, fr, &mut y);
            flops += if opts.transpose {
                backward_lt(&self.fronts[id], &mut y, fr.m(), nb)
            } else {
                backward_u(&self.fronts[id], &mut y, fr.m(), nb)
            };
            scatter(&mut w, n, nb, fr, &y, false);
        }
        let mut x = vec![C64::new(0.0, 0.0); n * nb];
        for j in 0..nb {
            for (r, out) in x[j * n..(j + 1) * n].iter_mut().enumerate() {
                *out = w[sym.iperm[r] + j * n].to_c64();
            }
        }
        BlockOutput { x, nb, visits, flops }
    }

    /// Solves `A X = B` (or `A^T X = B`) for sparse columns `B` given in the
    /// original numbering. Blocks are solved in parallel.
    pub fn solve(&self, rhs: &SparseCols, opts: &SolveOptions) -> Result<(DenseCols, SolveStats)> {
        let t0 = Instant::now();
        let n = self.sym.n();
        check_rows(rhs, n)?;
        if opts.block_size == 0 {
            return Err(HorstError::config("block_size", "must be positive"));
        }
        let (order, starts) = if opts.permute {
            order_columns(rhs, &self.sym, opts.block_size)
        } else {
            let nc = rhs.ncols();
            let mut s: Vec<usize> = (0..nc).step_by(opts.block_size).collect();
            s.push(nc);
            ((0..nc).collect(), s)
        };
        let blocks: Vec<Vec<&Vec<(usize, C64)>>> = starts
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| order[w[0]..w[1]].iter().map(|&j| &rhs.cols[j]).collect())
            .collect();
        let outs: Vec<BlockOutput> = blocks.par_iter().map(|b| self.solve_block(b, opts)).collect();
        let mut x = DenseCols::zeros(n, rhs.ncols());
        let mut stats = SolveStats {
            nrhs: rhs.ncols(),
            visits_unpruned: blocks.len() * self.sym.tree.len(),
            ..Default::default()
        };
        let mut pos = 0;
        for out in outs {
            let nb = out.nb;
            for jj in 0..nb {
                x.col_mut(order[pos + jj]).copy_from_slice(&out.x[jj * n..(jj + 1) * n]);
            }
            pos += nb;
            stats.visits.push(out.visits);
            stats.visits_total += out.visits;
            stats.flops += out.flops;
        }
        stats.seconds = t0.elapsed().as_secs_f64();
        Ok((x, stats))
    }

    /// Records solve work in the factorization statistics.
    pub fn record_solve(&mut self, s: &SolveStats) {
        self.stats.flops_solve += s.flops;
        self.stats.t_solve += s.seconds;
    }
}
