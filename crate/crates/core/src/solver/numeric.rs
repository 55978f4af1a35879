//! Multifrontal numeric factorization in full-rank, block low-rank and
//! mixed-precision block low-rank modes.

use super::cluster::{cluster_numbers, FrontClusters};
use super::compress::{compress_block, Compressed};
use super::dense::{gemm, panel_lu, trsm_lower, MatMut, MatRef};
use super::precision::mp_partition;
use super::scalar::Scalar;
use super::stats::{Arithmetic, FactorMode, FactorizationStats};
use super::symbolic::Symbolic;
use super::tiles::{update_sub, Operand, Tile, TileBytes};
use crate::sparse::CscMatrix;
use crate::{HorstError, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

pub const DEFAULT_PIVOT_THRESHOLD: f64 = 0.01;
pub const DEFAULT_EPS_BLR: f64 = 1e-5;
/// Panel width of full-rank fronts.
pub const FR_PANEL: usize = 128;
/// Admissibility distance factor for block low-rank fronts.
pub const BLR_ETA: f64 = 1.0;
/// Relaxed distance factor for mixed-precision fronts.
pub const MP_BLR_ETA: f64 = 0.5;
pub const EPS_BLR_RANGE: (f64, f64) = (1e-7, 1e-2);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorOptions {
    pub mode: FactorMode,
    pub arithmetic: Arithmetic,
    pub eps_blr: f64,
    pub pivot_threshold: f64,
    /// Force the serial postorder schedule.
    pub deterministic: bool,
}

impl Default for FactorOptions {
    fn default() -> Self {
        FactorOptions {
            mode: FactorMode::Fr,
            arithmetic: Arithmetic::Double,
            eps_blr: DEFAULT_EPS_BLR,
            pivot_threshold: DEFAULT_PIVOT_THRESHOLD,
            deterministic: false,
        }
    }
}

impl FactorOptions {
    pub fn validate(&self) -> Result<()> {
        if self.mode != FactorMode::Fr && !(self.eps_blr >= EPS_BLR_RANGE.0 && self.eps_blr <= EPS_BLR_RANGE.1) {
            return Err(HorstError::config(
                "eps_blr",
                format!("{} lies outside [{:e}, {:e}]", self.eps_blr, EPS_BLR_RANGE.0, EPS_BLR_RANGE.1),
            ));
        }
        if !(self.pivot_threshold > 0.0 && self.pivot_threshold <= 1.0) {
            return Err(HorstError::config("pivot_threshold", "must lie in (0, 1]"));
        }
        if self.mode == FactorMode::MpBlr && self.arithmetic != Arithmetic::Single {
            return Err(HorstError::config("arithmetic", "mixed-precision storage requires single arithmetic"));
        }
        Ok(())
    }

    fn eta(&self) -> f64 {
        if self.mode == FactorMode::MpBlr {
            MP_BLR_ETA
        } else {
            BLR_ETA
        }
    }
}

/// Factors of one fully-summed block column. Local indices refer to the
/// front: fully-summed unknowns first, then the border.
#[derive(Clone, Debug)]
pub struct BlockCol<T> {
    pub e0: usize,
    pub e1: usize,
    /// Row swapped with local row `e0 + j`, relative to `e0`.
    pub ipiv: Vec<usize>,
    /// Unit-lower `L` and upper `U` of the diagonal block, `w x w`.
    pub diag: Vec<T>,
    /// Tiles of `L` below the diagonal block: `(row0, row1, tile)`.
    pub lower: Vec<(usize, usize, Tile<T>)>,
    /// Tiles of `U` right of the diagonal block: `(col0, col1, tile)`.
    pub upper: Vec<(usize, usize, Tile<T>)>,
}

impl<T: Scalar> BlockCol<T> {
    pub fn width(&self) -> usize {
        self.e1 - self.e0
    }

    pub fn diag_ref(&self) -> MatRef<'_, T> {
        let w = self.width();
        MatRef::from_slice(&self.diag, w, w, w.max(1))
    }
}

#[derive(Clone, Debug)]
pub struct FrontFactor<T> {
    pub k: usize,
    pub b: usize,
    pub cols: Vec<BlockCol<T>>,
}

#[derive(Clone, Copy, Debug, Default)]
struct NodeTally {
    flops: u64,
    bytes: TileBytes,
    front_bytes: u64,
    cb_bytes: u64,
    dense_tiles: usize,
    lowrank_tiles: usize,
    weak: usize,
}

/// Factorization in working precision `T`.
#[derive(Clone, Debug)]
pub struct MultifrontalFactors<T> {
    pub(crate) sym: Arc<Symbolic>,
    pub(crate) fronts: Vec<FrontFactor<T>>,
    pub(crate) stats: FactorizationStats,
}

impl<T: Scalar> MultifrontalFactors<T> {
    pub fn symbolic(&self) -> &Symbolic {
        &self.sym
    }

    pub fn stats(&self) -> &FactorizationStats {
        &self.stats
    }

    pub fn fronts(&self) -> &[FrontFactor<T>] {
        &self.fronts
    }
}

struct Ctx<'a> {
    sym: &'a Symbolic,
    ap: &'a CscMatrix,
    apt: &'a CscMatrix,
    opts: &'a FactorOptions,
    cluster_of: &'a [u32],
}

type NodeResult<T> = (usize, FrontFactor<T>, NodeTally);

fn make_tile<T: Scalar>(block: MatRef<'_, T>, try_compress: bool, opts: &FactorOptions, flops: &mut u64) -> Tile<T> {
    if try_compress {
        let (c, f) = compress_block(block, opts.eps_blr);
        *flops += f;
        if let Compressed::LowRank(lr) = c {
            return if opts.mode == FactorMode::MpBlr {
                Tile::Mixed(mp_partition(&lr, opts.eps_blr))
            } else {
                Tile::LowRank(lr)
            };
        }
    }
    Tile::dense_from(block)
}

fn factor_node<T: Scalar>(ctx: &Ctx, id: usize, children: Vec<(usize, Vec<T>)>) -> Result<(FrontFactor<T>, Vec<T>, NodeTally)> {
    let sym = ctx.sym;
    let front = &sym.fronts[id];
    let (k, b) = (front.k(), front.b());
    let m = k + b;
    let mut f = vec![T::zero(); m * m];
    let mut tally = NodeTally {
        front_bytes: (m * m * T::BYTES) as u64,
        cb_bytes: (b * b * T::BYTES) as u64,
        ..Default::default()
    };

    for j in 0..k {
        let g = front.start + j;
        let (rows, vals) = ctx.ap.col(g);
        for (&w, &v) in rows.iter().zip(vals) {
            if w >= front.start {
                let l = front.local(w).expect("front structure covers every coupling");
                f[l + j * m] += T::from_c64(v);
            }
        }
        let (cols, vals) = ctx.apt.col(g);
        for (&w, &v) in cols.iter().zip(vals) {
            if w >= front.end {
                let l = front.local(w).expect("front structure covers every coupling");
                f[j + l * m] += T::from_c64(v);
            }
        }
    }
    for (c, cb) in children {
        let cborder = &sym.fronts[c].border;
        let bc = cborder.len();
        let mut map = Vec::with_capacity(bc);
        let mut p = 0;
        for &g in cborder {
            if g < front.end {
                map.push(g - front.start);
            } else {
                while front.border[p] != g {
                    p += 1;
                }
                map.push(k + p);
            }
        }
        for jj in 0..bc {
            let dst = map[jj] * m;
            for (ii, &v) in cb[jj * bc..(jj + 1) * bc].iter().enumerate() {
                f[map[ii] + dst] += v;
            }
        }
    }

    let opts = ctx.opts;
    let compress = opts.mode != FactorMode::Fr;
    let cl = if compress {
        FrontClusters::blr(sym, ctx.cluster_of, id)
    } else {
        FrontClusters::full_rank(k, b, FR_PANEL)
    };
    let eta = opts.eta();
    let all: Vec<(usize, usize)> = cl.fs.iter().chain(cl.border.iter()).copied().collect();
    let mut cols = Vec::with_capacity(cl.fs.len());
    for (kc, &(e0, e1)) in cl.fs.iter().enumerate() {
        let w = e1 - e0;
        let mut ipiv = vec![0; w];
        let info = panel_lu(MatMut::from_slice(&mut f, m, m, m).sub(e0, e0, m - e0, w), k - e0, opts.pivot_threshold, &mut ipiv)
            .map_err(|c| HorstError::SingularPivot {
                front: id,
                detail: format!("no usable pivot for fully-summed column {} of {k}", e0 + c),
            })?;
        tally.flops += info.flops;
        tally.weak += info.weak_pivots;
        if e1 < m {
            let mut t = MatMut::from_slice(&mut f, m, m, m).sub(e0, e1, m - e0, m - e1);
            for (j, &p) in ipiv.iter().enumerate() {
                t.swap_rows(j, p);
            }
            let (left, right) = MatMut::from_slice(&mut f, m, m, m).split_cols(e1);
            tally.flops += trsm_lower(left.rb().sub(e0, e0, w, w), true, right.sub(e0, 0, w, m - e1));
        }

        let fr = MatRef::from_slice(&f, m, m, m);
        let diag = fr.sub(e0, e0, w, w).to_vec();
        tally.bytes += Tile::Dense { nrows: w, ncols: w, data: diag.clone() }.bytes();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for (ci, &(r0, r1)) in all.iter().enumerate().skip(kc + 1) {
            let ok = compress && cl.admissible(ci, kc, eta);
            lower.push((r0, r1, make_tile(fr.sub(r0, e0, r1 - r0, w), ok, opts, &mut tally.flops)));
            let ok = compress && cl.admissible(kc, ci, eta);
            upper.push((r0, r1, make_tile(fr.sub(e0, r0, w, r1 - r0), ok, opts, &mut tally.flops)));
        }
        for (_, _, t) in lower.iter().chain(upper.iter()) {
            tally.bytes += t.bytes();
            if t.is_low_rank() {
                tally.lowrank_tiles += 1;
            } else {
                tally.dense_tiles += 1;
            }
        }

        if e1 < m {
            if compress {
                let lops: Vec<Operand<T>> = lower.iter().map(|t| t.2.operand()).collect();
                let uops: Vec<Operand<T>> = upper.iter().map(|t| t.2.operand()).collect();
                for (li, &(r0, r1, _)) in lower.iter().enumerate() {
                    for (ui, &(c0, c1, _)) in upper.iter().enumerate() {
                        let target = MatMut::from_slice(&mut f, m, m, m).sub(r0, c0, r1 - r0, c1 - c0);
                        tally.flops += update_sub(target, &lops[li], &uops[ui]);
                    }
                }
            } else {
                let (left, right) = MatMut::from_slice(&mut f, m, m, m).split_cols(e1);
                let l = left.rb().sub(e1, e0, m - e1, w);
                let (top, bottom) = right.split_rows(e1);
                let u = top.rb().sub(e0, 0, w, m - e1);
                tally.flops += gemm(bottom, l, u, -T::one(), true);
            }
        }
        cols.push(BlockCol {
            e0,
            e1,
            ipiv,
            diag,
            lower,
            upper,
        });
    }
    let mut cb = vec![T::zero(); b * b];
    for jj in 0..b {
        let src = (k + jj) * m + k;
        cb[jj * b..(jj + 1) * b].copy_from_slice(&f[src..src + b]);
    }
    Ok((FrontFactor { k, b, cols }, cb, tally))
}

/// Factorizes the subtree rooted at `root` serially; returns per-node
/// results and the root's contribution block.
fn factor_subtree<T: Scalar>(ctx: &Ctx, root: usize) -> Result<(Vec<NodeResult<T>>, Vec<T>)> {
    let tree = &ctx.sym.tree;
    let lo = tree.first_descendant(root);
    let mut cbs: Vec<Option<Vec<T>>> = (lo..=root).map(|_| None).collect();
    let mut out = Vec::with_capacity(root + 1 - lo);
    for id in lo..=root {
        let children = tree.nodes[id]
            .children
            .iter()
            .map(|&c| (c, cbs[c - lo].take().expect("child contribution available")))
            .collect();
        let (ff, cb, tally) = factor_node(ctx, id, children)?;
        cbs[id - lo] = Some(cb);
        out.push((id, ff, tally));
    }
    let cb = cbs[root - lo].take().unwrap_or_default();
    Ok((out, cb))
}

/// Disjoint subtrees to factor concurrently, obtained by repeatedly
/// splitting the heaviest candidate until there are enough of them.
fn parallel_tasks(sym: &Symbolic, threads: usize) -> Vec<usize> {
    let tree = &sym.tree;
    let mut tasks = tree.roots();
    while tasks.len() < 4 * threads {
        let Some((pos, _)) = tasks
            .iter()
            .enumerate()
            .filter(|(_, &t)| !tree.nodes[t].children.is_empty())
            .max_by_key(|(_, &t)| tree.subtree_dofs(t))
        else {
            break;
        };
        let t = tasks.remove(pos);
        tasks.extend(tree.nodes[t].children.iter().copied());
    }
    tasks.sort_unstable();
    tasks
}

/// Numeric factorization of `a` (original numbering) in precision `T`.
pub fn factorize_numeric<T: Scalar>(a: &CscMatrix, sym: Arc<Symbolic>, opts: &FactorOptions) -> Result<MultifrontalFactors<T>> {
    opts.validate()?;
    if a.nrows != sym.n() || a.ncols != sym.n() {
        return Err(HorstError::invalid(format!(
            "matrix is {}x{} but the analysis covers {} unknowns",
            a.nrows,
            a.ncols,
            sym.n()
        )));
    }
    let t0 = Instant::now();
    let ap = sym.permute(a);
    let apt = ap.transpose();
    let cluster_of = if opts.mode == FactorMode::Fr { Vec::new() } else { cluster_numbers(&sym) };
    let ctx = Ctx {
        sym: &sym,
        ap: &ap,
        apt: &apt,
        opts,
        cluster_of: &cluster_of,
    };
    let tree = &sym.tree;
    let nn = tree.len();
    let threads = rayon::current_num_threads();
    let serial = opts.deterministic || threads <= 1;
    let tasks = if serial { tree.roots() } else { parallel_tasks(&sym, threads) };
    let run = |&t: &usize| factor_subtree::<T>(&ctx, t);
    let results: Vec<Result<(Vec<NodeResult<T>>, Vec<T>)>> = if serial {
        tasks.iter().map(run).collect()
    } else {
        tasks.par_iter().map(run).collect()
    };
    let mut fronts: Vec<Option<FrontFactor<T>>> = (0..nn).map(|_| None).collect();
    let mut tallies = vec![NodeTally::default(); nn];
    let mut pending: HashMap<usize, Vec<T>> = HashMap::new();
    for (&t, r) in tasks.iter().zip(results) {
        let (nodes, cb) = r?;
        for (id, ff, tally) in nodes {
            fronts[id] = Some(ff);
            tallies[id] = tally;
        }
        pending.insert(t, cb);
    }
    for id in 0..nn {
        if fronts[id].is_some() {
            continue;
        }
        let children = tree.nodes[id]
            .children
            .iter()
            .map(|&c| (c, pending.remove(&c).expect("child contribution available")))
            .collect();
        let (ff, cb, tally) = factor_node(&ctx, id, children)?;
        fronts[id] = Some(ff);
        tallies[id] = tally;
        pending.insert(id, cb);
    }
    let fronts: Vec<FrontFactor<T>> = fronts.into_iter().map(|f| f.expect("every front factorized")).collect();

    // Peak footprint under the serial postorder schedule.
    let mut stored = 0u64;
    let mut live_cb = 0u64;
    let mut peak = 0u64;
    let mut bytes = TileBytes::default();
    let mut flops = 0u64;
    let (mut dense_tiles, mut lowrank_tiles, mut weak) = (0, 0, 0);
    for id in 0..nn {
        let t = &tallies[id];
        peak = peak.max(stored + live_cb + t.front_bytes + t.bytes.total + t.cb_bytes);
        for &c in &tree.nodes[id].children {
            live_cb -= tallies[c].cb_bytes;
        }
        live_cb += t.cb_bytes;
        stored += t.bytes.total;
        bytes += t.bytes;
        flops += t.flops;
        dense_tiles += t.dense_tiles;
        lowrank_tiles += t.lowrank_tiles;
        weak += t.weak;
    }
    let stats = FactorizationStats {
        mode: opts.mode,
        arithmetic: opts.arithmetic,
        eps_blr: if opts.mode == FactorMode::Fr { 0.0 } else { opts.eps_blr },
        n_dof: sym.n(),
        n_fronts: nn,
        max_front: sym.max_front,
        tree_depth: tree.depth(),
        factor_bytes: bytes.total,
        fr_factor_bytes: sym.fr_entries * T::BYTES as u64,
        peak_bytes: peak,
        flops_facto: flops,
        flops_solve: 0,
        t_analysis: 0.0,
        t_facto: t0.elapsed().as_secs_f64(),
        t_solve: 0.0,
        bytes_fp32: bytes.by_precision[0],
        bytes_fp24: bytes.by_precision[1],
        bytes_fp16: bytes.by_precision[2],
        dense_tiles,
        lowrank_tiles,
        weak_pivots: weak,
    };
    Ok(MultifrontalFactors { sym, fronts, stats })
}
