//! Isotropic total-variation denoising by dual projection.

use crate::model::VtiModel;

pub const TV_MAX_ITER: usize = 100;
pub const TV_GAP_TOL: f64 = 1e-6;
/// Dual step; the squared norm of the 3D forward-difference gradient is below 12.
const TAU: f64 = 1.0 / 12.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvReport {
    pub iterations: usize,
    pub gap: f64,
}

fn strides(dims: [usize; 3]) -> [usize; 3] {
    [dims[1] * dims[2], dims[2], 1]
}

/// Forward differences with zero flux across the last plane of each axis.
fn gradient(u: &[f64], dims: [usize; 3], out: &mut [[f64; 3]]) {
    let st = strides(dims);
    for ix in 0..dims[0] {
        for iy in 0..dims[1] {
            for iz in 0..dims[2] {
                let i = ix * st[0] + iy * st[1] + iz;
                let at = [ix, iy, iz];
                for a in 0..3 {
                    out[i][a] = if at[a] + 1 < dims[a] { u[i + st[a]] - u[i] } else { 0.0 };
                }
            }
        }
    }
}

/// Negative adjoint of `gradient`.
fn divergence(p: &[[f64; 3]], dims: [usize; 3], out: &mut [f64]) {
    let st = strides(dims);
    for ix in 0..dims[0] {
        for iy in 0..dims[1] {
            for iz in 0..dims[2] {
                let i = ix * st[0] + iy * st[1] + iz;
                let at = [ix, iy, iz];
                let mut d = 0.0;
                for a in 0..3 {
                    if at[a] + 1 < dims[a] {
                        d += p[i][a];
                    }
                    if at[a] > 0 {
                        d -= p[i - st[a]][a];
                    }
                }
                out[i] = d;
            }
        }
    }
}

/// Isotropic total variation with forward differences.
pub fn total_variation(u: &[f64], dims: [usize; 3]) -> f64 {
    let mut g = vec![[0.0; 3]; u.len()];
    gradient(u, dims, &mut g);
    g.iter().map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).sum()
}

/// `0.5 |u - m|^2 + lambda TV(u)`.
pub fn tv_objective(u: &[f64], m: &[f64], dims: [usize; 3], lambda: f64) -> f64 {
    let fid: f64 = u.iter().zip(m).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    fid + lambda * total_variation(u, dims)
}

/// Minimises `0.5 |u - m|^2 + lambda TV(u)`; stops after the iteration cap
/// or once the duality gap falls below `gap_tol` times the starting objective.
pub fn tv_denoise_with(m: &[f64], dims: [usize; 3], lambda: f64, max_iter: usize, gap_tol: f64) -> (Vec<f64>, TvReport) {
    assert_eq!(m.len(), dims[0] * dims[1] * dims[2], "field does not match the grid");
    if !(lambda > 0.0) {
        return (m.to_vec(), TvReport { iterations: 0, gap: 0.0 });
    }
    let n = m.len();
    let scale = tv_objective(m, m, dims, lambda);
    let mut p = vec![[0.0; 3]; n];
    let mut div = vec![0.0; n];
    let mut w = vec![[0.0; 3]; n];
    let mut v = vec![0.0; n];
    let m_sq: f64 = m.iter().map(|x| x * x).sum();
    let mut u = m.to_vec();
    let mut report = TvReport { iterations: 0, gap: 0.0 };
    let gap_of = |u: &[f64], div: &[f64]| {
        let primal = tv_objective(u, m, dims, lambda);
        let dual = 0.5 * m_sq - 0.5 * m.iter().zip(div).map(|(a, d)| (a - lambda * d).powi(2)).sum::<f64>();
        primal - dual
    };
    report.gap = gap_of(&u, &div);
    if report.gap <= gap_tol * scale {
        return (u, report);
    }
    for it in 1..=max_iter {
        for i in 0..n {
            v[i] = div[i] - m[i] / lambda;
        }
        gradient(&v, dims, &mut w);
        for (pi, wi) in p.iter_mut().zip(&w) {
            let norm = (wi[0] * wi[0] + wi[1] * wi[1] + wi[2] * wi[2]).sqrt();
            let denom = 1.0 + TAU * norm;
            for a in 0..3 {
                pi[a] = (pi[a] + TAU * wi[a]) / denom;
            }
        }
        divergence(&p, dims, &mut div);
        for i in 0..n {
            u[i] = m[i] - lambda * div[i];
        }
        report.iterations = it;
        report.gap = gap_of(&u, &div);
        if report.gap <= gap_tol * scale {
            break;
        }
    }
    (u, report)
}

pub fn tv_denoise(m: &[f64], dims: [usize; 3], lambda: f64) -> Vec<f64> {
    tv_denoise_with(m, dims, lambda, TV_MAX_ITER, TV_GAP_TOL).0
}

/// Denoises V0 in place, leaving water cells and passive fields unchanged.
pub fn tv_denoise_model(model: &mut VtiModel, lambda: f64) -> TvReport {
    let dims = model.grid.dims;
    let (u, report) = tv_denoise_with(&model.v0, dims, lambda, TV_MAX_ITER, TV_GAP_TOL);
    for (i, val) in u.into_iter().enumerate() {
        if !model.is_water(i) {
            model.v0[i] = val;
        }
    }
    report
}
