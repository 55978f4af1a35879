//! Impedance matrix assembly for the VTI acoustic wave equation.

use super::pml::{PmlConfig, Stretching};
use super::stencil::{StencilWeightTable, StencilWeights, G_MAX};
use crate::model::{kolsky_futterman_velocity, Grid, VtiModel, DEFAULT_F_REF};
use crate::model::DEFAULT_PPW_MIN;
use crate::sparse::CscMatrix;
use crate::{HorstError, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Numbers of face, edge and corner neighbours sharing the off-centre mass.
const NEIGHBOUR_COUNTS: [f64; 3] = [6.0, 12.0, 8.0];

/// Assembly settings that are not part of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssembleOptions {
    pub f_ref: f64,
    pub ppw_min: f64,
    pub pml: PmlConfig,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            f_ref: DEFAULT_F_REF,
            ppw_min: DEFAULT_PPW_MIN,
            pml: PmlConfig::default(),
        }
    }
}

/// Per-node stencil weights plus the velocity that sets the layer damping.
/// Inversion keeps one instance fixed over a frequency stage.
#[derive(Clone, Debug)]
pub struct CellWeights {
    pub weights: Vec<StencilWeights>,
    pub c_ref: f64,
}

impl CellWeights {
    /// Weights chosen from each node's points per wavelength. Fails when any
    /// node falls below `ppw_min`.
    pub fn from_model(model: &VtiModel, omega: C64, table: &StencilWeightTable, opts: &AssembleOptions) -> Result<Self> {
        let f = frequency_hz(omega)?;
        let h = model.grid.spacing[0];
        let mut weights = Vec::with_capacity(model.len());
        let mut worst = (f64::INFINITY, 0usize);
        for i in 0..model.len() {
            let c = kolsky_futterman_velocity(model.v0[i], model.q[i], f, opts.f_ref)?;
            let g = c.norm() / (f * h);
            if g < worst.0 {
                worst = (g, i);
            }
            weights.push(table.lookup(g.min(G_MAX)));
        }
        if worst.0 < opts.ppw_min {
            return Err(HorstError::PpwViolation {
                ppw: worst.0,
                required: opts.ppw_min,
                cell: model.grid.coords(worst.1),
            });
        }
        let c_ref = (0..model.len())
            .map(|i| model.v0[i] * (1.0 + 2.0 * model.epsilon[i].max(0.0)).sqrt())
            .fold(0.0, f64::max);
        Ok(CellWeights { weights, c_ref })
    }

    /// The same weights everywhere, for analysis and tests.
    pub fn uniform(model: &VtiModel, w: StencilWeights) -> Self {
        let c_ref = model.v_max();
        CellWeights {
            weights: vec![w; model.len()],
            c_ref,
        }
    }
}

/// Pieces of the operator that depend on the vertical velocity, kept for
/// gradient evaluation.
#[derive(Clone, Debug)]
pub struct OperatorParts {
    /// Stretched mass `s_x s_y s_z omega^2 / kappa0` per node.
    pub mass: Vec<C64>,
    /// Mass distribution (centre, face, edge, corner) per node.
    pub mass_weights: Vec<[f64; 4]>,
    /// Anelliptic prefactor `s_x s_y s_z 2 (eps - delta) / omega^2` per node.
    pub aniso: Vec<C64>,
    /// Complex bulk modulus `rho c^2` per node.
    pub kappa: Vec<C64>,
    /// Horizontal and vertical second-derivative operators of the anelliptic term.
    pub horizontal: CscMatrix,
    pub vertical: CscMatrix,
    pub has_aniso: bool,
}

/// Assembled operator together with the context needed to use it.
#[derive(Clone, Debug)]
pub struct ImpedanceMatrix {
    pub matrix: CscMatrix,
    pub grid: Grid,
    pub omega: C64,
    /// False for nodes pinned to zero by the free surface.
    pub live: Vec<bool>,
    pub parts: OperatorParts,
}

/// Temporal frequency in Hz of a possibly complex angular frequency.
pub fn frequency_hz(omega: C64) -> Result<f64> {
    let f = omega.re.abs() / (2.0 * PI);
    if !(f > 0.0 && f.is_finite()) {
        return Err(HorstError::invalid(format!("angular frequency needs a positive real part, got {omega}")));
    }
    Ok(f)
}

#[inline]
fn slot(d: [i64; 3]) -> usize {
    ((d[0] + 1) * 9 + (d[1] + 1) * 3 + (d[2] + 1)) as usize
}

struct Layout<'a> {
    grid: &'a Grid,
    live: &'a [bool],
}

impl Layout<'_> {
    #[inline]
    fn node(&self, c: [i64; 3]) -> Option<usize> {
        let d = self.grid.dims;
        if c[0] < 0 || c[1] < 0 || c[2] < 0 || c[0] >= d[0] as i64 || c[1] >= d[1] as i64 || c[2] >= d[2] as i64 {
            return None;
        }
        Some(self.grid.index(c[0] as usize, c[1] as usize, c[2] as usize))
    }

    #[inline]
    fn live_node(&self, c: [i64; 3]) -> Option<usize> {
        self.node(c).filter(|&i| self.live[i])
    }

    #[inline]
    fn clamped(&self, c: [i64; 3]) -> usize {
        let d = self.grid.dims;
        let cl = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
        self.grid.index(cl(c[0], d[0]), cl(c[1], d[1]), cl(c[2], d[2]))
    }
}

/// Assembles with weights picked per node from the default table.
pub fn assemble_operator(model: &VtiModel, omega: C64, opts: &AssembleOptions) -> Result<ImpedanceMatrix> {
    let w = CellWeights::from_model(model, omega, StencilWeightTable::default_table(), opts)?;
    assemble_with_weights(model, omega, &w, opts)
}

/// Assembles `A(omega) = m + (1+2eps)(X+Y) + Z + 2(eps-delta)/omega^2 (X+Y) kappa0 Z`
/// on the 27-point footprint, every term scaled by the layer stretching.
pub fn assemble_with_weights(model: &VtiModel, omega: C64, cw: &CellWeights, opts: &AssembleOptions) -> Result<ImpedanceMatrix> {
    model.validate()?;
    let grid = &model.grid;
    if !grid.is_cubic() {
        return Err(HorstError::invalid("assembly requires equal spacing on all axes"));
    }
    opts.pml.validate(grid)?;
    if cw.weights.len() != model.len() {
        return Err(HorstError::invalid("weight field does not match the model grid"));
    }
    let f = frequency_hz(omega)?;
    let n = grid.len();
    let h = grid.spacing[0];
    let inv_h2 = 1.0 / (h * h);
    let free_surface = opts.pml.free_surface();
    let live: Vec<bool> = (0..n).map(|i| !(free_surface && grid.coords(i)[2] == 0)).collect();
    let lay = Layout { grid, live: &live };
    let st = Stretching::new(grid, omega, cw.c_ref, &opts.pml);

    let mut kappa = vec![ZERO; n];
    let mut stretch = vec![ZERO; n];
    let mut mass = vec![ZERO; n];
    let mut aniso = vec![ZERO; n];
    let mut has_aniso = false;
    for i in 0..n {
        let c = kolsky_futterman_velocity(model.v0[i], model.q[i], f, opts.f_ref)?;
        kappa[i] = model.rho[i] * c * c;
        let [ix, iy, iz] = grid.coords(i);
        stretch[i] = st.node[0][ix] * st.node[1][iy] * st.node[2][iz];
        mass[i] = stretch[i] * omega * omega / kappa[i];
        let e = model.epsilon[i] - model.delta[i];
        if e != 0.0 {
            has_aniso = true;
        }
        aniso[i] = stretch[i] * 2.0 * e / (omega * omega);
    }
    let buoy: Vec<f64> = model.rho.iter().map(|r| 1.0 / r).collect();
    let horiz_scale: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * model.epsilon[i]).collect();

    let mut coef = vec![ZERO; n * 27];
    add_stiffness(&lay, &st, cw, &buoy, &horiz_scale, inv_h2, &mut coef);
    add_mass(&lay, cw, &mass, &mut coef);

    let (horizontal, vertical) = anelliptic_operators(&lay, &st, &buoy, inv_h2)?;
    if has_aniso {
        for p in 0..n {
            if !live[p] || aniso[p] == ZERO {
                continue;
            }
            let cp = grid.coords(p);
            let (hq, hv) = row_entries(&horizontal, p);
            for (&q, &hval) in hq.iter().zip(hv) {
                let (zr, zv) = row_entries(&vertical, q);
                for (&r, &zval) in zr.iter().zip(zv) {
                    let cr = grid.coords(r);
                    let d = [
                        cr[0] as i64 - cp[0] as i64,
                        cr[1] as i64 - cp[1] as i64,
                        cr[2] as i64 - cp[2] as i64,
                    ];
                    coef[p * 27 + slot(d)] += aniso[p] * hval * kappa[q] * zval;
                }
            }
        }
    }

    let matrix = to_csc(&lay, &coef);
    Ok(ImpedanceMatrix {
        matrix,
        grid: grid.clone(),
        omega,
        live,
        parts: OperatorParts {
            mass,
            mass_weights: cw.weights.iter().map(|w| w.mass).collect(),
            aniso,
            kappa,
            horizontal,
            vertical,
            has_aniso,
        },
    })
}

/// Row access for matrices stored as the CSC of their transpose.
fn row_entries(t: &CscMatrix, row: usize) -> (&[usize], &[C64]) {
    t.col(row)
}

/// Adds `-w beta (g.u)^2` energy terms for every staggered gradient sample.
fn add_stiffness(
    lay: &Layout,
    st: &Stretching,
    cw: &CellWeights,
    buoy: &[f64],
    horiz_scale: &[f64],
    inv_h2: f64,
    coef: &mut [C64],
) {
    let d = lay.grid.dims;
    let mut nodes: Vec<([i64; 3], f64)> = Vec::with_capacity(8);
    for a in 0..3 {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        // Sub-stencils: (weight index, factor, average along b, average along c).
        let variants: [(usize, f64, bool, bool); 4] =
            [(0, 1.0, false, false), (1, 0.5, true, false), (1, 0.5, false, true), (2, 1.0, true, true)];
        for &(widx, factor, avg_b, avg_c) in &variants {
            let lo_b = if avg_b { -1 } else { 0 };
            let lo_c = if avg_c { -1 } else { 0 };
            for ia in -1..d[a] as i64 {
                for ib in lo_b..d[b] as i64 {
                    for ic in lo_c..d[c] as i64 {
                        nodes.clear();
                        let nb = if avg_b { 2 } else { 1 };
                        let nc = if avg_c { 2 } else { 1 };
                        let g = 1.0 / (nb * nc) as f64;
                        for db in 0..nb {
                            for dc in 0..nc {
                                for da in 0..2 {
                                    let mut p = [0i64; 3];
                                    p[a] = ia + da;
                                    p[b] = ib + db;
                                    p[c] = ic + dc;
                                    nodes.push((p, if da == 1 { g } else { -g }));
                                }
                            }
                        }
                        if !nodes.iter().any(|(p, _)| lay.live_node(*p).is_some()) {
                            continue;
                        }
                        let mut mat = 0.0;
                        let mut w = 0.0;
                        for (p, _) in nodes.iter() {
                            let i = lay.clamped(*p);
                            let m = if a == 2 { buoy[i] } else { buoy[i] * horiz_scale[i] };
                            mat += m;
                            w += cw.weights[i].stiffness[widx];
                        }
                        let cnt = nodes.len() as f64;
                        mat /= cnt;
                        w /= cnt;
                        if w == 0.0 {
                            continue;
                        }
                        let twice = |ax: usize, lo: i64, averaged: bool| -> usize {
                            let n = d[ax] as i64;
                            if averaged {
                                (2 * lo + 1).clamp(1, 2 * n - 3) as usize
                            } else {
                                (2 * lo).clamp(0, 2 * n - 2) as usize
                            }
                        };
                        let sa = st.at(a, twice(a, ia, true));
                        let sb = st.at(b, twice(b, ib, avg_b));
                        let sc = st.at(c, twice(c, ic, avg_c));
                        let beta = sb * sc / sa * (mat * w * factor * inv_h2);
                        for (p, gp) in nodes.iter() {
                            let Some(i) = lay.live_node(*p) else { continue };
                            for (q, gq) in nodes.iter() {
                                if lay.live_node(*q).is_none() {
                                    continue;
                                }
                                let dd = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
                                coef[i * 27 + slot(dd)] -= beta * (gp * gq);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Consistent mass spread over the 27-point neighbourhood, symmetrised
/// between each pair of nodes.
fn add_mass(lay: &Layout, cw: &CellWeights, mass: &[C64], coef: &mut [C64]) {
    let n = lay.grid.len();
    for p in 0..n {
        if !lay.live[p] {
            coef[p * 27 + slot([0, 0, 0])] = ONE;
            continue;
        }
        let wp = &cw.weights[p].mass;
        coef[p * 27 + slot([0, 0, 0])] += wp[0] * mass[p];
        let cp = lay.grid.coords(p);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for dz in -1i64..=1 {
                    let k = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    if k == 0 {
                        continue;
                    }
                    let Some(q) = lay.live_node([cp[0] as i64 + dx, cp[1] as i64 + dy, cp[2] as i64 + dz]) else {
                        continue;
                    };
                    let cnt = NEIGHBOUR_COUNTS[k - 1];
                    let wq = &cw.weights[q].mass;
                    coef[p * 27 + slot([dx, dy, dz])] += 0.5 * (wp[k] / cnt * mass[p] + wq[k] / cnt * mass[q]);
                }
            }
        }
    }
}

/// Horizontal `sum_a (1/s_a) d_a (b/s_a) d_a` and vertical `(1/s_z) d_z (b/s_z) d_z`
/// 3-point operators over live nodes, stored as the CSC of their transpose
/// so that column `p` lists row `p`.
fn anelliptic_operators(lay: &Layout, st: &Stretching, buoy: &[f64], inv_h2: f64) -> Result<(CscMatrix, CscMatrix)> {
    let grid = lay.grid;
    let n = grid.len();
    let mut htrip = Vec::new();
    let mut vtrip = Vec::new();
    for p in 0..n {
        if !lay.live[p] {
            continue;
        }
        let cp = grid.coords(p);
        for a in 0..3 {
            let trip = if a == 2 { &mut vtrip } else { &mut htrip };
            let s_p = st.node[a][cp[a]];
            let mut diag = ZERO;
            for dir in [-1i64, 1] {
                let mut c = [cp[0] as i64, cp[1] as i64, cp[2] as i64];
                c[a] += dir;
                let nb = lay.node(c);
                let bq = match nb {
                    Some(q) => 0.5 * (buoy[p] + buoy[q]),
                    None => buoy[p],
                };
                let half_idx = if dir < 0 { cp[a] as i64 - 1 } else { cp[a] as i64 };
                let s_half = if half_idx < 0 || half_idx >= st.half[a].len() as i64 {
                    st.node[a][cp[a]]
                } else {
                    st.half[a][half_idx as usize]
                };
                let v = bq * inv_h2 / (s_p * s_half);
                diag -= v;
                if let Some(q) = lay.live_node(c) {
                    trip.push((q, p, v));
                }
            }
            trip.push((p, p, diag));
        }
    }
    Ok((
        CscMatrix::from_triplets(n, n, &htrip)?,
        CscMatrix::from_triplets(n, n, &vtrip)?,
    ))
}

fn to_csc(lay: &Layout, coef: &[C64]) -> CscMatrix {
    let grid = lay.grid;
    let n = grid.len();
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowidx = Vec::with_capacity(n * 27);
    let mut values = Vec::with_capacity(n * 27);
    colptr.push(0);
    for j in 0..n {
        let cj = grid.coords(j);
        if !lay.live[j] {
            rowidx.push(j);
            values.push(coef[j * 27 + slot([0, 0, 0])]);
            colptr.push(rowidx.len());
            continue;
        }
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for dz in -1i64..=1 {
                    let Some(i) = lay.live_node([cj[0] as i64 + dx, cj[1] as i64 + dy, cj[2] as i64 + dz]) else {
                        continue;
                    };
                    rowidx.push(i);
                    values.push(coef[i * 27 + slot([-dx, -dy, -dz])]);
                }
            }
        }
        colptr.push(rowidx.len());
    }
    CscMatrix {
        nrows: n,
        ncols: n,
        colptr,
        rowidx,
        values,
    }
}

impl ImpedanceMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows
    }

    /// `Re(lambda^T (dA/dv0_p) u)` for every node, with weights held fixed.
    pub fn velocity_sensitivity(&self, model: &VtiModel, lambda: &[C64], u: &[C64]) -> Vec<f64> {
        let grid = &self.grid;
        let n = grid.len();
        let parts = &self.parts;
        let mut out = vec![0.0; n];
        // Anelliptic term: (H^T D lambda)_p (2 kappa_p / v0_p) (Z u)_p.
        let (ht_dl, zu) = if parts.has_aniso {
            let dl: Vec<C64> = (0..n).map(|i| parts.aniso[i] * lambda[i]).collect();
            // `horizontal` is stored transposed, so its matvec applies H^T.
            (parts.horizontal.matvec(&dl), parts.vertical.matvec_transpose(u))
        } else {
            (Vec::new(), Vec::new())
        };
        for p in 0..n {
            if !self.live[p] {
                continue;
            }
            let dm = -2.0 * parts.mass[p] / model.v0[p];
            let wp = &parts.mass_weights[p];
            let mut acc = wp[0] * lambda[p] * u[p];
            let cp = grid.coords(p);
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dz in -1i64..=1 {
                        let k = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                        if k == 0 {
                            continue;
                        }
                        let c = [cp[0] as i64 + dx, cp[1] as i64 + dy, cp[2] as i64 + dz];
                        let d = grid.dims;
                        if c.iter().zip(d.iter()).any(|(&v, &n)| v < 0 || v >= n as i64) {
                            continue;
                        }
                        let q = grid.index(c[0] as usize, c[1] as usize, c[2] as usize);
                        if !self.live[q] {
                            continue;
                        }
                        let w = 0.5 * wp[k] / NEIGHBOUR_COUNTS[k - 1];
                        acc += w * (lambda[p] * u[q] + lambda[q] * u[p]);
                    }
                }
            }
            let mut val = dm * acc;
            if parts.has_aniso {
                val += ht_dl[p] * (2.0 * parts.kappa[p] / model.v0[p]) * zu[p];
            }
            out[p] = val.re;
        }
        out
    }
}
