//! Subsurface model grids and the physical relations attached to them.

pub(crate) mod io;
mod plan;

pub use io::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use plan::{grid_interval_for_frequency, FrequencyPlan, Stage, DEFAULT_PPW_MIN};

use crate::{HorstError, Result, C64};
use serde::{Deserialize, Serialize};

/// Reference frequency of the attenuation dispersion relation, in Hz.
pub const DEFAULT_F_REF: f64 = 10.0;
/// Density assigned to water cells, in kg/m^3.
pub const WATER_DENSITY: f64 = 1000.0;
/// Upper bound accepted by the velocity-density relation, in m/s.
pub const MAX_BROCHER_VELOCITY: f64 = 8500.0;

/// Regular 3D grid. Index order is x slowest, z fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Grid {
            dims,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Cubic-cell grid anchored at the origin.
    pub fn cubic(dims: [usize; 3], h: f64) -> Result<Self> {
        Grid::new(dims, [h; 3], [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(HorstError::invalid(format!("grid dims must be positive, got {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return Err(HorstError::invalid(format!(
                "grid spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(HorstError::invalid("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.dims[1] + iy) * self.dims[2] + iz
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nz = self.dims[2];
        let ny = self.dims[1];
        [idx / (ny * nz), (idx / nz) % ny, idx % nz]
    }

    /// Physical position of a node.
    pub fn position(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [
            self.origin[0] + ix as f64 * self.spacing[0],
            self.origin[1] + iy as f64 * self.spacing[1],
            self.origin[2] + iz as f64 * self.spacing[2],
        ]
    }

    /// Physical length covered by the nodes along each axis.
    pub fn extent(&self) -> [f64; 3] {
        [
            (self.dims[0] - 1) as f64 * self.spacing[0],
            (self.dims[1] - 1) as f64 * self.spacing[1],
            (self.dims[2] - 1) as f64 * self.spacing[2],
        ]
    }

    pub fn is_cubic(&self) -> bool {
        let h = self.spacing[0];
        self.spacing.iter().all(|s| ((s - h) / h).abs() < 1e-12)
    }

    /// True when a physical point lies inside the node hull.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let e = self.extent();
        (0..3).all(|a| {
            let r = p[a] - self.origin[a];
            r >= -1e-9 * self.spacing[a] && r <= e[a] + 1e-9 * self.spacing[a]
        })
    }
}

/// VTI acoustic model: vertical velocity plus passive Thomsen parameters,
/// density and attenuation. Only `v0` is updated by inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct VtiModel {
    pub grid: Grid,
    /// Vertical velocity, m/s.
    pub v0: Vec<f64>,
    pub delta: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Density, kg/m^3.
    pub rho: Vec<f64>,
    /// Quality factor; `f64::INFINITY` marks a lossless cell.
    pub q: Vec<f64>,
    /// Per (x, y) column, index of the first cell below the seabed.
    pub water_depth_index: Vec<usize>,
}

impl VtiModel {
    /// Isotropic, lossless, constant model without water.
    pub fn homogeneous(grid: Grid, v0: f64, rho: f64) -> Result<Self> {
        grid.validate()?;
        let n = grid.len();
        let cols = grid.dims[0] * grid.dims[1];
        let m = VtiModel {
            v0: vec![v0; n],
            delta: vec![0.0; n],
            epsilon: vec![0.0; n],
            rho: vec![rho; n],
            q: vec![f64::INFINITY; n],
            water_depth_index: vec![0; cols],
            grid,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    #[inline]
    pub fn is_water(&self, idx: usize) -> bool {
        let [ix, iy, iz] = self.grid.coords(idx);
        iz < self.water_depth_index[ix * self.grid.dims[1] + iy]
    }

    /// Mask of cells that inversion may update.
    pub fn active_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| !self.is_water(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.grid.len();
        for (name, f) in [
            ("v0", &self.v0),
            ("delta", &self.delta),
            ("epsilon", &self.epsilon),
            ("rho", &self.rho),
            ("q", &self.q),
        ] {
            if f.len() != n {
                return Err(HorstError::invalid(format!(
                    "field {name} has {} values, grid has {n}",
                    f.len()
                )));
            }
        }
        if self.water_depth_index.len() != self.grid.dims[0] * self.grid.dims[1] {
            return Err(HorstError::invalid("water_depth_index must have nx*ny entries"));
        }
        if let Some(&w) = self.water_depth_index.iter().find(|&&w| w > self.grid.dims[2]) {
            return Err(HorstError::invalid(format!("water depth index {w} exceeds nz")));
        }
        for i in 0..n {
            if !(self.v0[i].is_finite() && self.v0[i] > 0.0) {
                return Err(HorstError::invalid(format!("v0 must be positive, got {} at cell {i}", self.v0[i])));
            }
            if !(self.rho[i].is_finite() && self.rho[i] > 0.0) {
                return Err(HorstError::invalid(format!("rho must be positive at cell {i}")));
            }
            if !(self.q[i] > 0.0) {
                return Err(HorstError::invalid(format!("q must be positive at cell {i}")));
            }
            if !self.delta[i].is_finite() || !self.epsilon[i].is_finite() {
                return Err(HorstError::invalid(format!("anisotropy must be finite at cell {i}")));
            }
            if 1.0 + 2.0 * self.epsilon[i] <= 0.0 {
                return Err(HorstError::invalid(format!("1 + 2 epsilon must be positive at cell {i}")));
            }
        }
        Ok(())
    }

    /// Marks the top `cells` of every column as water.
    pub fn set_water_layer(&mut self, cells: usize) {
        let cells = cells.min(self.grid.dims[2]);
        self.water_depth_index.iter_mut().for_each(|w| *w = cells);
    }

    /// Slowest vertical velocity, used for grid sizing.
    pub fn v_min(&self) -> f64 {
        self.v0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn v_max(&self) -> f64 {
        self.v0.iter().cloned().fold(0.0, f64::max)
    }
}

/// Brocher's empirical density for a P velocity in m/s, returned in kg/m^3.
pub fn brocher_density(vp: f64) -> Result<f64> {
    if !vp.is_finite() || vp < 0.0 {
        return Err(HorstError::invalid(format!("velocity must be non-negative, got {vp}")));
    }
    if vp > MAX_BROCHER_VELOCITY {
        return Err(HorstError::invalid(format!(
            "velocity {vp} exceeds the density relation range of {MAX_BROCHER_VELOCITY} m/s"
        )));
    }
    let v = vp / 1000.0;
    let g_cc = v * (1.6612 + v * (-0.4721 + v * (0.0671 + v * (-0.0043 + v * 0.000106))));
    Ok(g_cc * 1000.0)
}

/// Density field from the model velocity, with water cells set to 1000 kg/m^3.
pub fn density_from_velocity(model: &VtiModel) -> Result<Vec<f64>> {
    (0..model.len())
        .map(|i| {
            if model.is_water(i) {
                Ok(WATER_DENSITY)
            } else {
                brocher_density(model.v0[i])
            }
        })
        .collect()
}

/// Complex velocity of the Kolsky-Futterman constant-Q model under the
/// `exp(-i omega t)` convention. The imaginary part makes plane waves decay
/// with travel distance.
pub fn kolsky_futterman_velocity(v0: f64, q: f64, f: f64, f_ref: f64) -> Result<C64> {
    if !(v0 > 0.0) || !(f > 0.0) || !(f_ref > 0.0) || !(q > 0.0) {
        return Err(HorstError::invalid(format!(
            "attenuation relation needs positive v0, q, f and f_ref (got {v0}, {q}, {f}, {f_ref})"
        )));
    }
    if q.is_infinite() {
        return Ok(C64::new(v0, 0.0));
    }
    let phase = v0 * (1.0 + (f / f_ref).ln() / (std::f64::consts::PI * q));
    Ok(C64::new(phase, 0.0) / C64::new(1.0, 0.5 / q))
}

/// Trilinear resampling onto a grid of spacing `h_new` covering the same
/// extent. The water column is recomputed from the resampled water mask.
pub fn resample_model(model: &VtiModel, h_new: f64) -> Result<VtiModel> {
    if !(h_new.is_finite() && h_new > 0.0) {
        return Err(HorstError::invalid(format!("target spacing must be positive, got {h_new}")));
    }
    let src = &model.grid;
    let extent = src.extent();
    let mut dims = [0usize; 3];
    for a in 0..3 {
        dims[a] = (extent[a] / h_new).round() as usize + 1;
        if dims[a] < 2 {
            return Err(HorstError::invalid(format!(
                "resampling to h={h_new} leaves fewer than two nodes along axis {a}"
            )));
        }
    }
    let grid = Grid::new(dims, [h_new; 3], src.origin)?;
    let water: Vec<f64> = (0..model.len()).map(|i| if model.is_water(i) { 1.0 } else { 0.0 }).collect();
    let inv_q: Vec<f64> = model.q.iter().map(|q| 1.0 / q).collect();

    let n = grid.len();
    let mut out = VtiModel {
        v0: vec![0.0; n],
        delta: vec![0.0; n],
        epsilon: vec![0.0; n],
        rho: vec![0.0; n],
        q: vec![0.0; n],
        water_depth_index: vec![0; dims[0] * dims[1]],
        grid: grid.clone(),
    };
    let mut water_new = vec![0.0; n];
    for idx in 0..n {
        let [ix, iy, iz] = grid.coords(idx);
        let p = grid.position(ix, iy, iz);
        let stencil = trilinear_stencil(src, p);
        let interp = |f: &[f64]| stencil.iter().map(|&(j, w)| w * f[j]).sum::<f64>();
        out.v0[idx] = interp(&model.v0);
        out.delta[idx] = interp(&model.delta);
        out.epsilon[idx] = interp(&model.epsilon);
        out.rho[idx] = interp(&model.rho);
        let iq = interp(&inv_q);
        out.q[idx] = if iq > 0.0 { 1.0 / iq } else { f64::INFINITY };
        water_new[idx] = interp(&water);
    }
    for ix in 0..dims[0] {
        for iy in 0..dims[1] {
            let mut w = 0;
            while w < dims[2] && water_new[grid.index(ix, iy, w)] >= 0.5 {
                w += 1;
            }
            out.water_depth_index[ix * dims[1] + iy] = w;
        }
    }
    Ok(out)
}

/// Up to eight (node, weight) pairs interpolating a field at `p`, clamped to the grid hull.
pub fn trilinear_stencil(grid: &Grid, p: [f64; 3]) -> Vec<(usize, f64)> {
    let mut lo = [0usize; 3];
    let mut t = [0.0f64; 3];
    for a in 0..3 {
        let n = grid.dims[a];
        let u = ((p[a] - grid.origin[a]) / grid.spacing[a]).clamp(0.0, (n - 1) as f64);
        if n == 1 {
            lo[a] = 0;
            t[a] = 0.0;
            continue;
        }
        let i = (u.floor() as usize).min(n - 2);
        lo[a] = i;
        t[a] = u - i as f64;
    }
    let mut out = Vec::with_capacity(8);
    for dx in 0..2 {
        for dy in 0..2 {
            for dz in 0..2 {
                let w = (if dx == 1 { t[0] } else { 1.0 - t[0] })
                    * (if dy == 1 { t[1] } else { 1.0 - t[1] })
                    * (if dz == 1 { t[2] } else { 1.0 - t[2] });
                if w == 0.0 {
                    continue;
                }
                let ix = (lo[0] + dx).min(grid.dims[0] - 1);
                let iy = (lo[1] + dy).min(grid.dims[1] - 1);
                let iz = (lo[2] + dz).min(grid.dims[2] - 1);
                out.push((grid.index(ix, iy, iz), w));
            }
        }
    }
    out
}
