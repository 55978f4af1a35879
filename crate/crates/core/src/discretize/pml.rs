//! Complex coordinate stretching for the absorbing layers.

use crate::model::Grid;
use crate::{HorstError, Result, C64};
use serde::{Deserialize, Serialize};

/// Thinnest absorbing layer accepted when a layer is requested.
pub const MIN_PML_WIDTH: usize = 8;

/// Absorbing layer settings. The top face is either a free surface or,
/// with `six_faces`, absorbing like the others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmlConfig {
    /// Layer thickness in cells; zero disables absorption (rigid walls).
    pub width: usize,
    /// Absorb on the top face too instead of imposing a free surface.
    pub six_faces: bool,
    /// Target normal-incidence reflection of the continuous layer.
    pub reflection: f64,
}

impl Default for PmlConfig {
    fn default() -> Self {
        PmlConfig {
            width: 10,
            six_faces: false,
            reflection: 1e-4,
        }
    }
}

impl PmlConfig {
    pub fn free_surface(&self) -> bool {
        !self.six_faces
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.width > 0 && self.width < MIN_PML_WIDTH {
            return Err(HorstError::invalid(format!(
                "absorbing layer of {} cells is thinner than the minimum of {MIN_PML_WIDTH}",
                self.width
            )));
        }
        if !(self.reflection > 0.0 && self.reflection < 1.0) {
            return Err(HorstError::invalid("layer reflection coefficient must lie in (0, 1)"));
        }
        for a in 0..3 {
            if grid.dims[a] < 3 {
                return Err(HorstError::invalid(format!("axis {a} needs at least 3 nodes")));
            }
        }
        Ok(())
    }

    /// Damping amplitude reaching `reflection` for a cubic profile over the layer.
    pub fn gamma_max(&self, c_ref: f64, h: f64) -> f64 {
        if self.width == 0 {
            return 0.0;
        }
        let l = self.width as f64 * h;
        4.0 * c_ref * (1.0 / self.reflection).ln() / (2.0 * l)
    }
}

/// Stretching factors `s = 1 + i gamma / omega` sampled on nodes and on the
/// midpoints between consecutive nodes, per axis.
#[derive(Clone, Debug)]
pub struct Stretching {
    pub node: [Vec<C64>; 3],
    pub half: [Vec<C64>; 3],
}

impl Stretching {
    pub fn new(grid: &Grid, omega: C64, c_ref: f64, cfg: &PmlConfig) -> Self {
        let mut node: [Vec<C64>; 3] = Default::default();
        let mut half: [Vec<C64>; 3] = Default::default();
        for a in 0..3 {
            let n = grid.dims[a];
            let h = grid.spacing[a];
            let gmax = cfg.gamma_max(c_ref, h);
            let low = a != 2 || cfg.six_faces;
            let profile = |u: f64| -> C64 {
                if cfg.width == 0 {
                    return C64::new(1.0, 0.0);
                }
                let w = cfg.width as f64;
                let lo_edge = w;
                let hi_edge = (n - 1) as f64 - w;
                let d = if low && u < lo_edge {
                    lo_edge - u
                } else if u > hi_edge {
                    u - hi_edge
                } else {
                    0.0
                };
                let gamma = gmax * (d / w).min(1.0).powi(3);
                C64::new(1.0, 0.0) + C64::i() * gamma / omega
            };
            node[a] = (0..n).map(|i| profile(i as f64)).collect();
            half[a] = (0..n.saturating_sub(1)).map(|i| profile(i as f64 + 0.5)).collect();
        }
        Stretching { node, half }
    }

    /// Stretching at a position given in index units (multiples of 0.5).
    #[inline]
    pub fn at(&self, axis: usize, twice_index: usize) -> C64 {
        if twice_index % 2 == 0 {
            self.node[axis][twice_index / 2]
        } else {
            self.half[axis][twice_index / 2]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// 1D analogue of the 3D assembly: d/dx((1/s) du/dx) + s k^2 u = delta.
    fn solve_1d(n: usize, ppw: f64, width: usize, src: usize) -> (Vec<C64>, f64) {
        let h = 1.0;
        let k = 2.0 * PI / (ppw * h);
        let omega = C64::new(k, 0.0);
        let grid = Grid::new([n, 3, 3], [h; 3], [0.0; 3]).unwrap();
        let cfg = PmlConfig {
            width,
            six_faces: true,
            reflection: PmlConfig::default().reflection,
        };
        let s = Stretching::new(&grid, omega, 1.0, &cfg);
        let mut lower = vec![C64::new(0.0, 0.0); n];
        let mut diag = vec![C64::new(0.0, 0.0); n];
        let mut upper = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            diag[i] = s.node[0][i] * k * k * h * h;
            if i + 1 < n {
                let b = 1.0 / s.half[0][i];
                diag[i] -= b;
                upper[i] = b;
            }
            if i > 0 {
                let b = 1.0 / s.half[0][i - 1];
                diag[i] -= b;
                lower[i] = b;
            }
        }
        let mut rhs = vec![C64::new(0.0, 0.0); n];
        rhs[src] = C64::new(1.0, 0.0);
        // Thomas algorithm.
        for i in 1..n {
            let m = lower[i] / diag[i - 1];
            diag[i] -= m * upper[i - 1];
            rhs[i] = rhs[i] - m * rhs[i - 1];
        }
        let mut u = vec![C64::new(0.0, 0.0); n];
        u[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            u[i] = (rhs[i] - upper[i] * u[i + 1]) / diag[i];
        }
        let kd = (1.0 - (k * h).powi(2) / 2.0).acos() / h;
        (u, kd)
    }

    #[test]
    fn one_dimensional_reflection_below_threshold() {
        let width = 16;
        let n = 200;
        let src = 60;
        let (u, kd) = solve_1d(n, 4.0, width, src);
        // Fit u = a exp(i kd x) + b exp(-i kd x) between source and layer.
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        let mut r = [C64::new(0.0, 0.0); 2];
        for i in src + 5..n - width - 2 {
            let x = i as f64;
            let e = [(C64::i() * kd * x).exp(), (-C64::i() * kd * x).exp()];
            for p in 0..2 {
                r[p] += e[p].conj() * u[i];
                for q in 0..2 {
                    m[p][q] += e[p].conj() * e[q];
                }
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let a = (r[0] * m[1][1] - m[0][1] * r[1]) / det;
        let b = (m[0][0] * r[1] - m[1][0] * r[0]) / det;
        let refl = b.norm() / a.norm();
        assert!(refl <= 1e-3, "reflection {refl}");
    }

    #[test]
    fn interior_is_unstretched() {
        let grid = Grid::cubic([40, 40, 40], 10.0).unwrap();
        let s = Stretching::new(&grid, C64::new(30.0, 0.0), 1500.0, &PmlConfig::default());
        assert_eq!(s.node[0][20], C64::new(1.0, 0.0));
        assert!(s.node[0][0].im > 0.0);
        assert!(s.node[0][39].im > 0.0);
        assert_eq!(s.node[2][0], C64::new(1.0, 0.0), "free surface has no top layer");
        assert!(s.node[2][39].im > 0.0);
        assert!(PmlConfig { width: 4, ..Default::default() }.validate(&grid).is_err());
    }
}
