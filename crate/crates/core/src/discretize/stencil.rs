//! Mixed-grid 27-point stencil weights and their dispersion analysis.

use crate::{HorstError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

/// Smallest and largest points-per-wavelength covered by weight tables.
pub const G_MIN: f64 = 3.8;
pub const G_MAX: f64 = 40.0;

/// Sample points of the default weight table.
pub const DEFAULT_G_SAMPLES: [f64; 16] = [
    3.8, 4.0, 4.25, 4.5, 5.0, 5.5, 6.0, 7.0, 8.0, 10.0, 12.0, 15.0, 20.0, 25.0, 30.0, 40.0,
];

/// Stiffness mix over the axis-aligned, singly rotated and doubly rotated
/// gradient stencils, plus the consistent-mass distribution over the centre,
/// 6 faces, 12 edges and 8 corners. Each group sums to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StencilWeights {
    pub stiffness: [f64; 3],
    pub mass: [f64; 4],
}

impl StencilWeights {
    /// Second-order 7-point operator with lumped mass.
    pub const SEVEN_POINT: StencilWeights = StencilWeights {
        stiffness: [1.0, 0.0, 0.0],
        mass: [1.0, 0.0, 0.0, 0.0],
    };

    fn from_params(p: &[f64; 5]) -> Self {
        StencilWeights {
            stiffness: [p[0], p[1], 1.0 - p[0] - p[1]],
            mass: [1.0 - p[2] - p[3] - p[4], p[2], p[3], p[4]],
        }
    }

    fn params(&self) -> [f64; 5] {
        [self.stiffness[0], self.stiffness[1], self.mass[1], self.mass[2], self.mass[3]]
    }

    fn bound_violation(&self) -> f64 {
        self.stiffness
            .iter()
            .chain(self.mass.iter())
            .map(|&w| (-w).max(0.0) + (w - 1.0).max(0.0))
            .sum()
    }

    fn lerp(a: &Self, b: &Self, t: f64) -> Self {
        let mut out = *a;
        for i in 0..3 {
            out.stiffness[i] = a.stiffness[i] + t * (b.stiffness[i] - a.stiffness[i]);
        }
        for i in 0..4 {
            out.mass[i] = a.mass[i] + t * (b.mass[i] - a.mass[i]);
        }
        out
    }
}

/// Unit propagation direction from polar angle (from vertical) and azimuth.
pub fn direction(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Directions covering one octant, which is enough by symmetry.
pub fn octant_directions(n_theta: usize, n_phi: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let theta = if n_theta == 1 { 0.0 } else { 0.5 * PI * i as f64 / (n_theta - 1) as f64 };
        for j in 0..n_phi {
            let phi = if n_phi == 1 { 0.0 } else { 0.5 * PI * j as f64 / (n_phi - 1) as f64 };
            out.push(direction(theta, phi));
        }
    }
    out
}

struct Symbols {
    s1: f64,
    s2: f64,
    s3: f64,
    face: f64,
    edge: f64,
    corner: f64,
}

fn symbols(g: f64, dir: [f64; 3]) -> Symbols {
    let kh = 2.0 * PI / g;
    let c = [(kh * dir[0]).cos(), (kh * dir[1]).cos(), (kh * dir[2]).cos()];
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    for a in 0..3 {
        let b = (a + 1) % 3;
        let d = (a + 2) % 3;
        let da = 2.0 * c[a] - 2.0;
        s1 += da;
        s2 += da * 0.5 * ((1.0 + c[b]) / 2.0 + (1.0 + c[d]) / 2.0);
        s3 += da * (1.0 + c[b]) * (1.0 + c[d]) / 4.0;
    }
    Symbols {
        s1,
        s2,
        s3,
        face: (c[0] + c[1] + c[2]) / 3.0,
        edge: (c[0] * c[1] + c[0] * c[2] + c[1] * c[2]) / 3.0,
        corner: c[0] * c[1] * c[2],
    }
}

/// Relative phase-velocity error of the homogeneous discrete operator for a
/// plane wave sampled at `g` points per wavelength travelling along `dir`.
pub fn dispersion_error(w: &StencilWeights, g: f64, dir: [f64; 3]) -> f64 {
    let s = symbols(g, dir);
    let stiff = w.stiffness[0] * s.s1 + w.stiffness[1] * s.s2 + w.stiffness[2] * s.s3;
    let mass = w.mass[0] + w.mass[1] * s.face + w.mass[2] * s.edge + w.mass[3] * s.corner;
    let ratio = -stiff / mass;
    if !(ratio > 0.0) {
        return f64::INFINITY;
    }
    g / (2.0 * PI) * ratio.sqrt() - 1.0
}

/// Largest absolute dispersion error over a set of directions.
pub fn max_dispersion_error(w: &StencilWeights, g: f64, dirs: &[[f64; 3]]) -> f64 {
    dirs.iter().map(|&d| dispersion_error(w, g, d).abs()).fold(0.0, f64::max)
}

/// Weights tabulated against points per wavelength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StencilWeightTable {
    pub g: Vec<f64>,
    pub weights: Vec<StencilWeights>,
}

/// Outcome of fitting one table row.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub g: f64,
    pub max_error: f64,
    pub baseline_error: f64,
}

impl StencilWeightTable {
    /// Table optimised on the default samples, computed once per process.
    pub fn default_table() -> &'static StencilWeightTable {
        static TABLE: OnceLock<StencilWeightTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            optimize_stencil_weights(&DEFAULT_G_SAMPLES, &octant_directions(8, 8))
                .expect("default samples are valid")
                .0
        })
    }

    /// Piecewise-linear interpolation in `g`, clamped to the table range.
    pub fn lookup(&self, g: f64) -> StencilWeights {
        let n = self.g.len();
        if g <= self.g[0] {
            return self.weights[0];
        }
        if g >= self.g[n - 1] {
            return self.weights[n - 1];
        }
        let i = self.g.partition_point(|&x| x <= g) - 1;
        let t = (g - self.g[i]) / (self.g[i + 1] - self.g[i]);
        StencilWeights::lerp(&self.weights[i], &self.weights[i + 1], t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.g.is_empty() || self.g.len() != self.weights.len() {
            return Err(HorstError::invalid("weight table must have one row per sample"));
        }
        if self.g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HorstError::invalid("weight table samples must increase"));
        }
        for (g, w) in self.g.iter().zip(&self.weights) {
            let ms: f64 = w.mass.iter().sum();
            let ss: f64 = w.stiffness.iter().sum();
            if (ms - 1.0).abs() > 1e-6 || (ss - 1.0).abs() > 1e-6 {
                return Err(HorstError::invalid(format!("weights at G={g} do not sum to one")));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("G,w1,w2,w3,wm_center,wm_face,wm_edge,wm_corner\n");
        for (g, w) in self.g.iter().zip(&self.weights) {
            s.push_str(&format!(
                "{g},{},{},{},{},{},{},{}\n",
                w.stiffness[0], w.stiffness[1], w.stiffness[2], w.mass[0], w.mass[1], w.mass[2], w.mass[3]
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut g = Vec::new();
        let mut weights = Vec::new();
        let mut offset = 0u64;
        for (i, line) in text.lines().enumerate() {
            let here = offset;
            offset += line.len() as u64 + 1;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| HorstError::format(here, format!("bad weight row `{line}`")))?;
            if v.len() != 8 {
                return Err(HorstError::format(here, format!("weight row needs 8 columns, got {}", v.len())));
            }
            g.push(v[0]);
            weights.push(StencilWeights {
                stiffness: [v[1], v[2], v[3]],
                mass: [v[4], v[5], v[6], v[7]],
            });
        }
        let t = StencilWeightTable { g, weights };
        t.validate()?;
        Ok(t)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        StencilWeightTable::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Fits one weight row per sample of `g_samples`, minimising the largest
/// phase-velocity error over `dirs`. Each row starts from a linear
/// least-squares fit and is refined by a bounded simplex search.
pub fn optimize_stencil_weights(g_samples: &[f64], dirs: &[[f64; 3]]) -> Result<(StencilWeightTable, Vec<FitReport>)> {
    if dirs.len() < 32 {
        return Err(HorstError::invalid(format!("need at least 32 directions, got {}", dirs.len())));
    }
    if g_samples.is_empty() {
        return Err(HorstError::invalid("no sample points"));
    }
    for &g in g_samples {
        if !(G_MIN - 1e-12..=G_MAX + 1e-12).contains(&g) {
            return Err(HorstError::invalid(format!("sample G={g} outside [{G_MIN}, {G_MAX}]")));
        }
    }
    if g_samples.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HorstError::invalid("samples must increase"));
    }
    let mut weights = Vec::with_capacity(g_samples.len());
    let mut reports = Vec::with_capacity(g_samples.len());
    for &g in g_samples {
        let w = fit_row(g, dirs);
        reports.push(FitReport {
            g,
            max_error: max_dispersion_error(&w, g, dirs),
            baseline_error: max_dispersion_error(&StencilWeights::SEVEN_POINT, g, dirs),
        });
        weights.push(w);
    }
    Ok((
        StencilWeightTable {
            g: g_samples.to_vec(),
            weights,
        },
        reports,
    ))
}

fn fit_row(g: f64, dirs: &[[f64; 3]]) -> StencilWeights {
    let kappa = (g / (2.0 * PI)).powi(2);
    // The exact-dispersion condition mass + kappa * stiffness = 0 is linear
    // in the five free weights.
    let mut ata = [[0.0f64; 5]; 5];
    let mut atb = [0.0f64; 5];
    for &d in dirs {
        let s = symbols(g, d);
        let row = [
            kappa * (s.s1 - s.s3),
            kappa * (s.s2 - s.s3),
            s.face - 1.0,
            s.edge - 1.0,
            s.corner - 1.0,
        ];
        let rhs = -(1.0 + kappa * s.s3);
        for i in 0..5 {
            atb[i] += row[i] * rhs;
            for j in 0..5 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, row) in ata.iter_mut().enumerate() {
        row[i] += 1e-10;
    }
    let start = solve_small(ata, atb)
        .map(|p| {
            let w = StencilWeights::from_params(&p);
            if w.bound_violation() > 0.0 {
                StencilWeights::SEVEN_POINT.params()
            } else {
                p
            }
        })
        .unwrap_or(StencilWeights::SEVEN_POINT.params());

    let objective = |p: &[f64; 5]| {
        let w = StencilWeights::from_params(p);
        max_dispersion_error(&w, g, dirs) + 10.0 * w.bound_violation()
    };
    let mut best = start;
    let mut best_f = objective(&best);
    for fallback in [StencilWeights::SEVEN_POINT.params(), [0.85, 0.05, 0.45, 0.05, 0.0]] {
        let f = objective(&fallback);
        if f < best_f {
            best = fallback;
            best_f = f;
        }
    }
    let mut step = 0.05;
    for _ in 0..6 {
        let (p, f) = nelder_mead(&objective, best, step, 4000, 1e-13);
        if f < best_f {
            best = p;
            best_f = f;
        }
        step *= 0.5;
    }
    let mut w = StencilWeights::from_params(&best);
    for v in w.stiffness.iter_mut().chain(w.mass.iter_mut()) {
        *v = v.clamp(0.0, 1.0);
    }
    let ss: f64 = w.stiffness.iter().sum();
    w.stiffness.iter_mut().for_each(|v| *v /= ss);
    let ms: f64 = w.mass.iter().sum();
    w.mass.iter_mut().for_each(|v| *v /= ms);
    w
}

fn solve_small(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for k in 0..5 {
        let p = (k..5).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-300 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..5 {
            let f = a[i][k] / a[k][k];
            for j in k..5 {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = [0.0; 5];
    for k in (0..5).rev() {
        let s: f64 = (k + 1..5).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

fn nelder_mead<F: Fn(&[f64; 5]) -> f64>(f: &F, x0: [f64; 5], step: f64, max_iter: usize, tol: f64) -> ([f64; 5], f64) {
    let mut simplex: Vec<([f64; 5], f64)> = Vec::with_capacity(6);
    simplex.push((x0, f(&x0)));
    for i in 0..5 {
        let mut x = x0;
        x[i] += step;
        simplex.push((x, f(&x)));
    }
    let lin = |a: &[f64; 5], b: &[f64; 5], t: f64| {
        let mut out = [0.0; 5];
        for i in 0..5 {
            out[i] = a[i] + t * (b[i] - a[i]);
        }
        out
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[5].1 - simplex[0].1 <= tol {
            break;
        }
        let mut centroid = [0.0; 5];
        for (x, _) in &simplex[..5] {
            for i in 0..5 {
                centroid[i] += x[i] / 5.0;
            }
        }
        let worst = simplex[5].0;
        let xr = lin(&centroid, &worst, -1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = lin(&centroid, &worst, -2.0);
            let fe = f(&xe);
            simplex[5] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[4].1 {
            simplex[5] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[5].1 {
                let xc = lin(&centroid, &xr, 0.5);
                (xc, f(&xc))
            } else {
                let xc = lin(&centroid, &worst, 0.5);
                (xc, f(&xc))
            };
            if fc < simplex[5].1.min(fr) {
                simplex[5] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lin(&best, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_point_axis_error_matches_closed_form() {
        // Along an axis the 7-point phase velocity is (G / pi) sin(pi / G).
        for g in [4.0, 6.0, 10.0] {
            let e = dispersion_error(&StencilWeights::SEVEN_POINT, g, [0.0, 0.0, 1.0]);
            let oracle = g / PI * (PI / g).sin() - 1.0;
            assert!((e - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn optimised_weights_beat_baseline_at_four_points() {
        let dirs = octant_directions(8, 8);
        let (table, reports) = optimize_stencil_weights(&[4.0], &dirs).unwrap();
        assert!(reports[0].max_error <= 0.01, "{:?}", reports[0]);
        assert!(reports[0].baseline_error > reports[0].max_error);
        table.validate().unwrap();
    }

    #[test]
    fn csv_roundtrip() {
        let t = StencilWeightTable::default_table();
        let back = StencilWeightTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back.g, t.g);
        for (a, b) in back.weights.iter().zip(&t.weights) {
            for i in 0..3 {
                assert_eq!(a.stiffness[i], b.stiffness[i]);
            }
            for i in 0..4 {
                assert_eq!(a.mass[i], b.mass[i]);
            }
        }
    }

    #[test]
    fn lookup_interpolates_and_clamps() {
        let t = StencilWeightTable::default_table();
        assert_eq!(t.lookup(100.0), *t.weights.last().unwrap());
        assert_eq!(t.lookup(1.0), t.weights[0]);
        let w = t.lookup(4.1);
        assert!((w.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_few_directions() {
        assert!(optimize_stencil_weights(&[4.0], &octant_directions(3, 3)).is_err());
    }
}
