//! Off-grid point sources and receivers by Kaiser-windowed sinc interpolation.

use crate::model::Grid;
use crate::sparse::{DenseCols, SparseCols};
use crate::{HorstError, Result, C64};
use std::f64::consts::PI;

/// Half-width of the interpolation window, in cells.
pub const HICKS_RADIUS: usize = 4;
/// Kaiser shape parameter paired with a radius of four cells.
pub const HICKS_KAISER_B: f64 = 6.31;

/// Grid coefficients coupling a physical point to the nodes around it.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingStencil {
    pub entries: Vec<(usize, f64)>,
}

impl CouplingStencil {
    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Interpolates a nodal field at the stencil point.
    pub fn sample(&self, field: &[C64]) -> C64 {
        self.entries.iter().map(|&(i, w)| field[i] * w).sum()
    }
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn windowed_sinc(x: f64, r: f64, b: f64) -> f64 {
    if x.abs() > r {
        return 0.0;
    }
    let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let t = x / r;
    sinc * bessel_i0(b * (1.0 - t * t).max(0.0).sqrt()) / bessel_i0(b)
}

/// One-axis weights as (node index, weight). Exact node hits collapse to a
/// single unit weight. Weights are normalized to sum to one so constants are
/// reproduced exactly. With `mirror` the axis starts at a free surface and
/// weights falling above it are folded back with opposite sign.
fn axis_weights(u: f64, n: usize, mirror: bool) -> Vec<(usize, f64)> {
    let r = HICKS_RADIUS as f64;
    let nearest = u.round();
    if (u - nearest).abs() < 1e-10 {
        let i = nearest as usize;
        if mirror && i == 0 {
            return Vec::new();
        }
        return vec![(i, 1.0)];
    }
    let mut w = std::collections::BTreeMap::new();
    let lo = nearest as i64 - HICKS_RADIUS as i64;
    let hi = nearest as i64 + HICKS_RADIUS as i64;
    let raw: Vec<(i64, f64)> = (lo..=hi)
        .map(|i| (i, windowed_sinc(i as f64 - u, r, HICKS_KAISER_B)))
        .filter(|&(_, c)| c != 0.0)
        .collect();
    let norm: f64 = raw.iter().map(|e| e.1).sum();
    for (i, c) in raw {
        let c = c / norm;
        if mirror && i <= 0 {
            if i < 0 {
                *w.entry((-i) as usize).or_insert(0.0) -= c;
            }
            continue;
        }
        if i < 0 || i >= n as i64 {
            continue;
        }
        *w.entry(i as usize).or_insert(0.0) += c;
    }
    w.into_iter().filter(|&(_, c)| c != 0.0).collect()
}

/// Interpolation stencil for a physical point. With `free_surface` the
/// window is mirrored with odd symmetry about the top plane.
pub fn hicks_coefficients(grid: &Grid, pos: [f64; 3], free_surface: bool) -> Result<CouplingStencil> {
    if !grid.contains(pos) {
        return Err(HorstError::invalid(format!("point {pos:?} lies outside the grid")));
    }
    let mut axes: [Vec<(usize, f64)>; 3] = Default::default();
    for a in 0..3 {
        let u = (pos[a] - grid.origin[a]) / grid.spacing[a];
        let u = u.clamp(0.0, (grid.dims[a] - 1) as f64);
        axes[a] = axis_weights(u, grid.dims[a], free_surface && a == 2);
    }
    let mut entries = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
    for &(ix, wx) in &axes[0] {
        for &(iy, wy) in &axes[1] {
            for &(iz, wz) in &axes[2] {
                entries.push((grid.index(ix, iy, iz), wx * wy * wz));
            }
        }
    }
    Ok(CouplingStencil { entries })
}

/// Source columns: each stencil scaled by its complex signature.
pub fn build_rhs(grid: &Grid, stencils: &[CouplingStencil], signatures: &[C64]) -> Result<SparseCols> {
    if stencils.len() != signatures.len() {
        return Err(HorstError::invalid(format!(
            "{} sources but {} signatures",
            stencils.len(),
            signatures.len()
        )));
    }
    let mut rhs = SparseCols::new(grid.len());
    for (st, &s) in stencils.iter().zip(signatures) {
        rhs.push(st.entries.iter().map(|&(i, w)| (i, s * w)).collect());
    }
    Ok(rhs)
}

/// Receiver gathers: entry `[j * n_rec + r]` samples wavefield column `j`
/// at receiver `r`. This is the transpose of injection with the same stencils.
pub fn sample_receivers(wavefields: &DenseCols, receivers: &[CouplingStencil]) -> Vec<C64> {
    let mut out = Vec::with_capacity(wavefields.ncols * receivers.len());
    for j in 0..wavefields.ncols {
        let col = wavefields.col(j);
        out.extend(receivers.iter().map(|r| r.sample(col)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::cubic([20, 20, 20], 10.0).unwrap()
    }

    #[test]
    fn node_hit_is_a_single_unit_weight() {
        let s = hicks_coefficients(&grid(), [50.0, 70.0, 90.0], false).unwrap();
        assert_eq!(s.entries, vec![(grid().index(5, 7, 9), 1.0)]);
    }

    #[test]
    fn midpoint_reconstructs_constant() {
        let s = hicks_coefficients(&grid(), [95.0, 95.0, 95.0], false).unwrap();
        assert_eq!(s.entries.len(), 8 * 8 * 8);
        assert!((s.sum() - 1.0).abs() < 1e-3, "sum {}", s.sum());
    }

    #[test]
    fn plane_wave_interpolation_is_accurate() {
        let g = grid();
        let k = 2.0 * PI / (6.0 * 10.0);
        let dir = [0.48, 0.6, 0.64];
        let field: Vec<C64> = (0..g.len())
            .map(|i| {
                let [ix, iy, iz] = g.coords(i);
                let p = g.position(ix, iy, iz);
                (C64::i() * k * (dir[0] * p[0] + dir[1] * p[1] + dir[2] * p[2])).exp()
            })
            .collect();
        let pos = [93.3, 101.7, 88.9];
        let s = hicks_coefficients(&g, pos, false).unwrap();
        let exact = (C64::i() * k * (dir[0] * pos[0] + dir[1] * pos[1] + dir[2] * pos[2])).exp();
        assert!((s.sample(&field) - exact).norm() < 0.01);
    }

    #[test]
    fn free_surface_mirroring_is_odd() {
        let g = grid();
        let s = hicks_coefficients(&g, [95.0, 95.0, 12.0], true).unwrap();
        assert!(s.entries.iter().all(|&(i, _)| g.coords(i)[2] > 0));
        // A field odd about the surface is sampled exactly where the window is mirrored.
        let field: Vec<C64> = (0..g.len())
            .map(|i| C64::new((g.coords(i)[2] as f64 * 0.3).sin(), 0.0))
            .collect();
        let v = s.sample(&field);
        assert!((v.re - (1.2f64 * 0.3).sin()).abs() < 2e-3, "{v}");
    }

    #[test]
    fn outside_is_rejected() {
        assert!(hicks_coefficients(&grid(), [-5.0, 0.0, 0.0], false).is_err());
        assert!(hicks_coefficients(&grid(), [0.0, 0.0, 191.0], false).is_err());
    }

    proptest! {
        #[test]
        fn sampling_is_transpose_of_injection(
            x in 45.0f64..145.0, y in 45.0f64..145.0, z in 0.0f64..145.0,
            seed in 0u64..1000,
        ) {
            let g = grid();
            let src = hicks_coefficients(&g, [x, y, z], true).unwrap();
            let rhs = build_rhs(&g, &[src.clone()], &[C64::new(1.0, 0.0)]).unwrap();
            let mut field = DenseCols::zeros(g.len(), 1);
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for v in field.col_mut(0).iter_mut() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *v = C64::new(((state >> 33) as f64) / 2f64.powi(31) - 1.0, 0.5);
            }
            // <injection, field> equals sampling of field at the same point.
            let injected: C64 = rhs.cols[0].iter().map(|&(i, w)| w * field.col(0)[i]).sum();
            let sampled = sample_receivers(&field, &[src])[0];
            prop_assert!((injected - sampled).norm() <= 1e-12 * (1.0 + sampled.norm()));
        }
    }
}
