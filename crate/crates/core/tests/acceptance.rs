//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every criterion runs and reports; the process exits non-zero on a failed
//! criterion only when `HORST_ACCEPTANCE_STRICT` is set. `HORST_ACCEPTANCE_ONLY`
//! takes a comma-separated list of criteria to run.

use horst::cli::bench::{clustered_sources, helmholtz_cube};
use horst::cli::survey::{synthesize_survey, Anomaly, BaseModelSpec, SurveySpec};
use horst::discretize::{
    assemble_operator, assemble_with_weights, AssembleOptions, CellWeights, ImpedanceMatrix, PmlConfig,
    StencilWeightTable, StencilWeights,
};
use horst::fwi::{
    run_continuation, simulate_gather, tv_denoise, Acquisition, ForwardSetup, FreqDataset, InversionOptions, StageProblem,
};
use horst::model::{grid_interval_for_frequency, FrequencyPlan, Grid, VtiModel, DEFAULT_PPW_MIN};
use horst::solver::{factorize_operator, Arithmetic, FactorMode, FactorOptions, SolveOptions, StatsRecord};
use horst::sparse::{CscMatrix, DenseCols, SparseCols};
use horst::{Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

// ---------------------------------------------------------------------------
// Independent helpers

/// Real part of the symbol of one operator row at wavenumber `xi` along `dir`.
fn row_symbol(op: &ImpedanceMatrix, center: usize, xi: f64, dir: [f64; 3]) -> f64 {
    let g = &op.grid;
    let h = g.spacing[0];
    let t = op.matrix.transpose();
    let (rows, vals) = t.col(center);
    let c0 = g.coords(center);
    let mut s = C64::new(0.0, 0.0);
    for (&j, v) in rows.iter().zip(vals) {
        let cj = g.coords(j);
        let phase: f64 = (0..3).map(|a| (cj[a] as f64 - c0[a] as f64) * dir[a]).sum::<f64>() * xi * h;
        s += v * C64::new(0.0, phase).exp();
    }
    s.re
}

/// Discrete wavenumber along `dir`: the zero of the row symbol near `k`.
fn discrete_wavenumber(op: &ImpedanceMatrix, center: usize, k: f64, dir: [f64; 3]) -> f64 {
    let (mut lo, mut hi) = (0.5 * k, 1.5 * k);
    let sign_lo = row_symbol(op, center, lo, dir) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (row_symbol(op, center, mid, dir) > 0.0) == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn octant(n: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for i in 0..n {
        let th = 0.5 * PI * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let ph = 0.5 * PI * j as f64 / (n - 1) as f64;
            out.push([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
        }
    }
    out
}

/// `||A x - b||_inf / (||A||_inf ||x||_inf + ||b||_inf)`.
fn residual(a: &CscMatrix, x: &[C64], b: &[C64]) -> f64 {
    let mut ax = vec![C64::new(0.0, 0.0); a.nrows];
    let mut row_abs = vec![0.0f64; a.nrows];
    for j in 0..a.ncols {
        let (rows, vals) = a.col(j);
        for (&i, v) in rows.iter().zip(vals) {
            ax[i] += v * x[j];
            row_abs[i] += v.norm();
        }
    }
    let r = ax.iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
    let an = row_abs.iter().cloned().fold(0.0, f64::max);
    let xn = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let bn = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    r / (an * xn + bn)
}

fn max_residual(a: &CscMatrix, x: &DenseCols, b: &DenseCols) -> f64 {
    (0..x.ncols).map(|j| residual(a, x.col(j), b.col(j))).fold(0.0, f64::max)
}

fn random_rhs(n: usize, ncols: usize, seed: u64) -> SparseCols {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rhs = SparseCols::new(n);
    for _ in 0..ncols {
        rhs.push((0..n).map(|i| (i, C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))).collect());
    }
    rhs
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn no_layer() -> AssembleOptions {
    AssembleOptions {
        pml: PmlConfig {
            width: 0,
            six_faces: true,
            ..Default::default()
        },
        ..Default::default()
    }
}

// ---------------------------------------------------------------------------
// Criteria

fn dispersion() -> Result<Verdict> {
    let (v, h) = (2000.0, 25.0);
    let freq = v / (4.0 * h);
    let omega = 2.0 * PI * freq;
    let k = omega / v;
    let grid = Grid::cubic([7, 7, 7], h)?;
    let model = VtiModel::homogeneous(grid.clone(), v, 1000.0)?;
    let center = grid.index(3, 3, 3);
    let optimized = assemble_operator(&model, c(omega), &no_layer())?;
    let seven = assemble_with_weights(
        &model,
        c(omega),
        &CellWeights::uniform(&model, StencilWeights::SEVEN_POINT),
        &no_layer(),
    )?;
    let worst = |op: &ImpedanceMatrix| {
        octant(12)
            .into_iter()
            .map(|d| (k / discrete_wavenumber(op, center, k, d) - 1.0).abs())
            .fold(0.0, f64::max)
    };
    let (e_opt, e_7) = (worst(&optimized), worst(&seven));
    verdict(
        e_opt <= 0.01 && e_7 > 0.01 && e_7 > e_opt,
        format!("max phase-velocity error at G=4: 27-point {e_opt:.2e} (<= 1e-2), 7-point {e_7:.2e}"),
    )
}

fn greens_function() -> Result<Verdict> {
    let (n, h, v, rho, width) = (48usize, 25.0, 2000.0, 1800.0, 8usize);
    let grid = Grid::cubic([n, n, n], h)?;
    let model = VtiModel::homogeneous(grid.clone(), v, rho)?;
    let freq = v / (4.0 * h);
    let k = 2.0 * PI * freq / v;
    let mut setup = ForwardSetup::default();
    setup.assemble.pml = PmlConfig {
        width,
        six_faces: true,
        ..Default::default()
    };
    let mid = n / 2;
    let src = grid.position(mid, mid, mid);
    let (lo, hi) = (width + 5, n - 1 - width - 5);
    let mut receivers = Vec::new();
    let mut exact = Vec::new();
    for ix in lo..=hi {
        for iy in lo..=hi {
            for iz in lo..=hi {
                let r = ((ix as f64 - mid as f64).powi(2) + (iy as f64 - mid as f64).powi(2) + (iz as f64 - mid as f64).powi(2))
                    .sqrt()
                    * h;
                if r < 5.0 * h {
                    continue;
                }
                receivers.push(grid.position(ix, iy, iz));
                // A unit nodal load stands for a point source of strength h^3.
                exact.push(-C64::new(0.0, k * r).exp() * (rho * h * h * h / (4.0 * PI * r)));
            }
        }
    }
    let acq = Acquisition {
        sources: vec![src],
        receivers,
        reciprocal: false,
    };
    let g = simulate_gather(&model, &acq, freq, &[c(1.0)], &setup, StencilWeightTable::default_table())?;
    let sim = g.trace(0);
    let num: f64 = sim.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = exact.iter().map(|b| b.norm_sqr()).sum();
    let err = (num / den).sqrt();
    let fit: C64 = sim.iter().zip(&exact).map(|(a, b)| b.conj() * a).sum::<C64>() / den;
    verdict(
        err <= 0.05,
        format!(
            "relative L2 {err:.3e} (<= 5e-2) over {} nodes; best complex scale {:.3} at {:+.3} rad",
            exact.len(),
            fit.norm(),
            fit.arg()
        ),
    )
}

fn vti_plane_waves() -> Result<Verdict> {
    let (v, rho, eps, delta): (f64, f64, f64, f64) = (2000.0, 1000.0, 0.2, 0.05);
    let freq = 5.0;
    let omega = 2.0 * PI * freq;
    let (theta, phi) = (0.7f64, 0.4f64);
    let (s2, c2) = (theta.sin().powi(2), theta.cos().powi(2));
    // Quadratic in K = |k|^2; the smaller root is the quasi-P branch.
    let a = 2.0 * (eps - delta) * v.powi(4) * s2 * c2;
    let b = -omega * omega * v * v * ((1.0 + 2.0 * eps) * s2 + c2);
    let c0 = omega.powi(4);
    let kk = if a.abs() < 1e-300 { -c0 / b } else { (-b - (b * b - 4.0 * a * c0).sqrt()) / (2.0 * a) };
    let kv = kk.sqrt();
    let kvec = [kv * theta.sin() * phi.cos(), kv * theta.sin() * phi.sin(), kv * theta.cos()];
    let scale = omega * omega / (rho * v * v);

    let mut hs = Vec::new();
    let mut res = Vec::new();
    for j in 0..5 {
        let g = 40.0 * 2f64.sqrt().powi(j);
        let h = v / (freq * g);
        let grid = Grid::cubic([7, 7, 7], h)?;
        let mut m = VtiModel::homogeneous(grid.clone(), v, rho)?;
        m.epsilon.iter_mut().for_each(|e| *e = eps);
        m.delta.iter_mut().for_each(|d| *d = delta);
        let op = assemble_operator(&m, c(omega), &no_layer())?;
        let u: Vec<C64> = (0..grid.len())
            .map(|i| {
                let q = grid.coords(i);
                let p = grid.position(q[0], q[1], q[2]);
                C64::new(0.0, (0..3).map(|a| kvec[a] * p[a]).sum::<f64>()).exp()
            })
            .collect();
        let center = grid.index(3, 3, 3);
        let au = op.matrix.matvec(&u);
        hs.push(h);
        res.push((au[center] / u[center]).norm() / scale);
    }
    let slope = loglog_slope(&hs, &res);

    let grid = Grid::cubic([7, 7, 7], 25.0)?;
    let mut m = VtiModel::homogeneous(grid.clone(), v, rho)?;
    m.epsilon.iter_mut().for_each(|e| *e = 0.15);
    m.delta.iter_mut().for_each(|d| *d = 0.15);
    let op = assemble_operator(&m, c(omega), &no_layer())?;
    let t = op.matrix.transpose();
    let mut max_row = 0;
    let mut interior_ok = true;
    for i in 0..grid.len() {
        let nnz = t.col(i).0.len();
        max_row = max_row.max(nnz);
        let q = grid.coords(i);
        if q.iter().all(|&x| x > 0 && x < 6) && nnz != 27 {
            interior_ok = false;
        }
    }
    let elliptic = !op.parts.has_aniso && op.parts.aniso.iter().all(|a| a.norm() == 0.0);
    verdict(
        (1.8..=2.3).contains(&slope) && max_row == 27 && interior_ok && elliptic,
        format!(
            "residual slope {slope:.3} in [1.8, 2.3] (residuals {:.2e} .. {:.2e}); eps=delta: max row {max_row} entries, interior rows 27: {interior_ok}, anelliptic term zero: {elliptic}",
            res[0],
            res[res.len() - 1]
        ),
    )
}

fn solver_residuals() -> Result<Verdict> {
    let op = helmholtz_cube(32, 25.0, 2000.0, 4.0, 8)?;
    let rhs = random_rhs(op.grid.len(), 4, 11);
    let b = rhs.to_dense();
    let mut out = Vec::new();
    for (mode, arith, limit) in [
        (FactorMode::Fr, Arithmetic::Double, 1e-12),
        (FactorMode::Blr, Arithmetic::Single, 1e-3),
        (FactorMode::MpBlr, Arithmetic::Single, 2e-3),
    ] {
        let mut f = factorize_operator(
            &op,
            &FactorOptions {
                mode,
                arithmetic: arith,
                eps_blr: 1e-5,
                ..Default::default()
            },
        )?;
        let (x, _) = f.solve(&rhs, &SolveOptions::default())?;
        out.push((mode, max_residual(&op.matrix, &x, &b), limit));
    }
    verdict(
        out.iter().all(|(_, r, l)| r <= l),
        out.iter()
            .map(|(m, r, l)| format!("{m} {r:.2e} (<= {l:.0e})"))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

struct Sweep {
    fr: Vec<StatsRecord>,
    blr: Vec<StatsRecord>,
    mp48: StatsRecord,
    mp48_residual: f64,
}

fn scaling_sweep() -> Result<Sweep> {
    let (h, v, ppw) = (25.0, 2000.0, 4.0);
    let mut fr = Vec::new();
    let mut blr = Vec::new();
    let mut mp48 = None;
    for n in [16, 24, 32, 40, 48] {
        let op = helmholtz_cube(n, h, v, ppw, 8)?;
        for mode in [FactorMode::Fr, FactorMode::Blr, FactorMode::MpBlr] {
            if mode == FactorMode::MpBlr && n != 48 {
                continue;
            }
            let mut f = factorize_operator(
                &op,
                &FactorOptions {
                    mode,
                    arithmetic: Arithmetic::Single,
                    eps_blr: 1e-5,
                    deterministic: true,
                    ..Default::default()
                },
            )?;
            let rec = f.record(v / (ppw * h), h, 0);
            match mode {
                FactorMode::Fr => fr.push(rec),
                FactorMode::Blr => blr.push(rec),
                FactorMode::MpBlr => {
                    let rhs = random_rhs(op.grid.len(), 2, 5);
                    let (x, _) = f.solve(&rhs, &SolveOptions::default())?;
                    mp48 = Some((rec, max_residual(&op.matrix, &x, &rhs.to_dense())));
                }
            }
        }
    }
    let (mp48, mp48_residual) = mp48.expect("n=48 runs");
    Ok(Sweep {
        fr,
        blr,
        mp48,
        mp48_residual,
    })
}

fn complexity(sweep: &Sweep) -> Result<Verdict> {
    let ns: Vec<f64> = [16.0, 24.0, 32.0, 40.0, 48.0].to_vec();
    let exp = |recs: &[StatsRecord], flops: bool| {
        let y: Vec<f64> = recs
            .iter()
            .map(|r| if flops { r.flops_facto as f64 } else { r.mem_factors_bytes as f64 })
            .collect();
        loglog_slope(&ns, &y)
    };
    let (ff, fb) = (exp(&sweep.fr, true), exp(&sweep.fr, false));
    let (bf, bb) = (exp(&sweep.blr, true), exp(&sweep.blr, false));
    verdict(
        (5.2..=6.8).contains(&ff) && (3.5..=4.5).contains(&fb) && bf < ff && bb < fb,
        format!("FR flops n^{ff:.3} in [5.2, 6.8], bytes n^{fb:.3} in [3.5, 4.5]; BLR flops n^{bf:.3}, bytes n^{bb:.3}"),
    )
}

fn mixed_precision(sweep: &Sweep) -> Result<Verdict> {
    let blr = sweep.blr.last().expect("n=48 BLR").mem_factors_bytes as f64;
    let mp = sweep.mp48.mem_factors_bytes as f64;
    let ratio = mp / blr;
    verdict(
        ratio <= 0.85 && sweep.mp48_residual <= 2e-3,
        format!(
            "MP-BLR / BLR factor bytes at 48^3 = {ratio:.4} (<= 0.85); MP-BLR residual {:.2e} (<= 2e-3)",
            sweep.mp48_residual
        ),
    )
}

fn pruning() -> Result<Verdict> {
    let op = helmholtz_cube(32, 25.0, 2000.0, 4.0, 8)?;
    let rhs = clustered_sources(&op.grid, 64);
    let mut f = factorize_operator(&op, &FactorOptions::default())?;
    let (x1, s1) = f.solve(&rhs, &SolveOptions::default())?;
    let (x0, s0) = f.solve(
        &rhs,
        &SolveOptions {
            prune: false,
            ..Default::default()
        },
    )?;
    let ratio = s1.visits_total as f64 / s0.visits_total as f64;
    let scale = x0.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = x1.data.iter().zip(&x0.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
    verdict(
        ratio <= 0.5 && diff <= 1e-12,
        format!(
            "forward visits {} / {} = {ratio:.3} (<= 0.5); relative difference {diff:.1e} (<= 1e-12)",
            s1.visits_total, s0.visits_total
        ),
    )
}

fn adjoint_gradient() -> Result<Verdict> {
    let n = 24;
    let h = 40.0;
    let grid = Grid::cubic([n, n, n], h)?;
    let mut truth = VtiModel::homogeneous(grid.clone(), 2000.0, 2000.0)?;
    for i in 0..truth.len() {
        let q = grid.coords(i);
        let (x, y, z) = (q[0] as f64, q[1] as f64, q[2] as f64);
        truth.v0[i] = 1800.0 + 18.0 * z + 4.0 * x - 3.0 * y + 40.0 * (0.4 * x).sin() * (0.3 * y).cos();
        truth.rho[i] = 1200.0 + 0.4 * truth.v0[i];
        truth.epsilon[i] = 0.1 + 0.002 * z;
        truth.delta[i] = 0.04 + 0.001 * x;
        truth.q[i] = 120.0;
    }
    let mut start = truth.clone();
    for i in 0..start.len() {
        let q = grid.coords(i);
        start.v0[i] = truth.v0[i] * (0.97 + 0.001 * q[2] as f64);
    }
    let mut setup = ForwardSetup::default();
    setup.assemble.pml = PmlConfig {
        width: 8,
        six_faces: false,
        ..Default::default()
    };
    let e = h * (n - 1) as f64;
    let acq = Acquisition {
        sources: vec![[0.4 * e, 0.45 * e, 0.5 * e], [0.55 * e, 0.5 * e, 0.45 * e], [0.5 * e, 0.6 * e, 0.55 * e]],
        receivers: (0..16)
            .map(|i| [0.36 * e + 0.02 * e * (i % 4) as f64 * 4.0, 0.36 * e + 0.08 * e * (i / 4) as f64, 0.05 * e])
            .collect(),
        reciprocal: false,
    };
    let table = StencilWeightTable::default_table();
    let freq = 4.0;
    let gather = simulate_gather(&truth, &acq, freq, &[c(1.0); 3], &setup, table)?;
    let problem = StageProblem::new(&setup, &start, &acq, &gather, table, false)?;
    let grad = problem.evaluate(&start, true)?.gradient.expect("gradient requested");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for _ in 0..5 {
        let q = [rng.random_range(9..15), rng.random_range(9..15), rng.random_range(2..15)];
        let i = grid.index(q[0], q[1], q[2]);
        let dv = 1.0;
        let mut mp = start.clone();
        mp.v0[i] += dv;
        let mut mm = start.clone();
        mm.v0[i] -= dv;
        let fd = (problem.evaluate(&mp, false)?.misfit - problem.evaluate(&mm, false)?.misfit) / (2.0 * dv);
        worst = worst.max((fd - grad[i]).abs() / fd.abs());
        cells.push(q);
    }
    verdict(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} (<= 1e-4) at cells {cells:?}"),
    )
}

fn inverse_crime() -> Result<Verdict> {
    let base_spec = BaseModelSpec {
        dims: [48, 48, 24],
        h: 25.0,
        water_cells: 3,
        gradient: 2.5,
        ..Default::default()
    };
    let base = base_spec.build()?;
    let spec = SurveySpec {
        anomalies: vec![Anomaly {
            center: [600.0, 600.0, 175.0],
            radius: 70.0,
            amplitude: 0.05,
        }],
        base: base_spec,
        ..Default::default()
    };
    let truth = synthesize_survey(&spec, &base)?.true_model;
    let m0 = base.clone();
    let mut sources = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            sources.push([250.0 + 233.0 * i as f64, 250.0 + 233.0 * j as f64, 75.0]);
        }
    }
    let mut receivers = Vec::new();
    for i in 0..10 {
        for j in 0..10 {
            receivers.push([225.0 + 80.0 * i as f64, 225.0 + 80.0 * j as f64, 10.0]);
        }
    }
    let acq = Acquisition {
        sources,
        receivers,
        reciprocal: true,
    };
    let mut setup = ForwardSetup::default();
    setup.assemble.pml = PmlConfig {
        width: 8,
        six_faces: false,
        ..Default::default()
    };
    setup.factor.arithmetic = Arithmetic::Single;
    let freqs = [3.0, 4.5, 6.0];
    let table = StencilWeightTable::default_table();
    let sig = vec![c(1.0); acq.sources.len()];
    let gathers = freqs
        .iter()
        .map(|&f| simulate_gather(&truth, &acq, f, &sig, &setup, table))
        .collect::<Result<Vec<_>>>()?;
    let dataset = FreqDataset {
        acquisition: acq.clone(),
        gathers,
    };
    let plan = FrequencyPlan::fixed_grid(&freqs, 25.0, 15, 2)?;
    let opts = InversionOptions::default();
    let mut passive_ok = true;
    let (model, _) = run_continuation(&plan, &dataset, &m0, &setup, table, &opts, |state, _| {
        let m = &state.model;
        passive_ok &= m.rho == m0.rho && m.epsilon == m0.epsilon && m.delta == m0.delta && m.q == m0.q;
        Ok(())
    })?;
    passive_ok &= model.rho == m0.rho && model.epsilon == m0.epsilon && model.delta == m0.delta && model.q == m0.q;

    let mut j_start = 0.0;
    let mut j_final = 0.0;
    for g in &dataset.gathers {
        j_start += StageProblem::new(&setup, &m0, &acq, g, table, true)?.evaluate(&m0, false)?.misfit;
        j_final += StageProblem::new(&setup, &model, &acq, g, table, true)?.evaluate(&model, false)?.misfit;
    }
    let support: Vec<usize> = (0..truth.len())
        .filter(|&i| (truth.v0[i] - base.v0[i]).abs() >= 0.01 * base.v0[i])
        .collect();
    let rms = |m: &VtiModel| {
        (support.iter().map(|&i| (m.v0[i] - truth.v0[i]).powi(2)).sum::<f64>() / support.len() as f64).sqrt()
    };
    let (e0, e1) = (rms(&m0), rms(&model));
    let misfit_ratio = j_final / j_start;
    let reduction = 1.0 - e1 / e0;
    verdict(
        misfit_ratio <= 0.1 && reduction >= 0.4 && passive_ok,
        format!(
            "misfit ratio {misfit_ratio:.3e} (<= 0.1); anomaly RMS error {e0:.2} -> {e1:.2} m/s, reduced {:.1}% (>= 40%) over {} cells; passive fields identical: {passive_ok}",
            100.0 * reduction,
            support.len()
        ),
    )
}

fn frequency_ladder() -> Result<Verdict> {
    let rows = [
        (2.5, 150.0),
        (3.5, 100.0),
        (5.0, 75.0),
        (6.7, 56.0),
        (7.6, 50.0),
        (8.5, 45.0),
        (8.5, 45.0),
        (10.1, 37.5),
        (11.6, 32.5),
        (13.0, 30.0),
    ];
    let mut worst: f64 = 0.0;
    for (f, h) in rows {
        let got = grid_interval_for_frequency(f, 1500.0, 4.0, DEFAULT_PPW_MIN)?;
        worst = worst.max((got - h).abs() / h);
    }
    verdict(worst <= 0.07, format!("worst relative deviation over 10 rows {worst:.3e} (<= 7e-2)"))
}

fn reciprocity() -> Result<Verdict> {
    let n = 20;
    let h = 50.0;
    let grid = Grid::cubic([n, n, n], h)?;
    let mut m = VtiModel::homogeneous(grid.clone(), 2000.0, 1900.0)?;
    for i in 0..m.len() {
        let q = grid.coords(i);
        m.v0[i] = 1800.0 + 25.0 * q[2] as f64 + 6.0 * q[1] as f64;
        m.epsilon[i] = 0.08;
        m.delta[i] = 0.08;
        m.q[i] = 150.0;
    }
    let mut setup = ForwardSetup::default();
    setup.assemble.pml = PmlConfig {
        width: 0,
        six_faces: false,
        ..Default::default()
    };
    let table = StencilWeightTable::default_table();
    let pairs = [
        ([312.0, 407.5, 333.3], [655.0, 590.2, 610.7]),
        ([150.5, 820.0, 212.0], [790.1, 260.4, 700.0]),
    ];
    let mut worst: f64 = 0.0;
    for (a, b) in pairs {
        let one = [c(1.0)];
        let ab = simulate_gather(&m, &Acquisition { sources: vec![a], receivers: vec![b], reciprocal: false }, 3.0, &one, &setup, table)?;
        let ba = simulate_gather(&m, &Acquisition { sources: vec![b], receivers: vec![a], reciprocal: false }, 3.0, &one, &setup, table)?;
        worst = worst.max((ab.data[0] - ba.data[0]).norm() / ab.data[0].norm());
    }
    verdict(worst <= 1e-6, format!("max relative trace difference {worst:.2e} (<= 1e-6)"))
}

fn tv_oracle(u: &[f64], dims: [usize; 3]) -> f64 {
    let idx = |x: usize, y: usize, z: usize| (x * dims[1] + y) * dims[2] + z;
    let mut tv = 0.0;
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let i = idx(x, y, z);
                let dx = if x + 1 < dims[0] { u[idx(x + 1, y, z)] - u[i] } else { 0.0 };
                let dy = if y + 1 < dims[1] { u[idx(x, y + 1, z)] - u[i] } else { 0.0 };
                let dz = if z + 1 < dims[2] { u[idx(x, y, z + 1)] - u[i] } else { 0.0 };
                tv += (dx * dx + dy * dy + dz * dz).sqrt();
            }
        }
    }
    tv
}

fn tv_denoising() -> Result<Verdict> {
    let dims = [14, 12, 10];
    let len = dims[0] * dims[1] * dims[2];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let noisy: Vec<f64> = (0..len)
        .map(|i| {
            let x = i / (dims[1] * dims[2]);
            (if x < 7 { 2000.0 } else { 2500.0 }) + 60.0 * (rng.random::<f64>() - 0.5)
        })
        .collect();
    let same = tv_denoise(&noisy, dims, 0.0);
    let identity = same.iter().zip(&noisy).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let lambda = 25.0;
    let u = tv_denoise(&noisy, dims, lambda);
    let obj = |v: &[f64]| 0.5 * v.iter().zip(&noisy).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + lambda * tv_oracle(v, dims);
    let (o0, o1) = (obj(&noisy), obj(&u));
    let (t0, t1) = (tv_oracle(&noisy, dims), tv_oracle(&u, dims));
    verdict(
        identity == 0.0 && o1 <= o0 && t1 <= t0,
        format!("lambda=0 max change {identity:.1e}; objective {o0:.4e} -> {o1:.4e}; TV {t0:.4e} -> {t1:.4e}"),
    )
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let strict = std::env::var_os("HORST_ACCEPTANCE_STRICT").is_some();
    let only: Option<Vec<usize>> = std::env::var("HORST_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut skipped = 0;
    let mut sweep: Option<Result<Sweep>> = None;
    let mut failed = Vec::new();
    for id in 1..=12 {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            skipped += 1;
            continue;
        }
        let t0 = Instant::now();
        let (name, outcome) = match id {
            1 => ("dispersion accuracy", dispersion()),
            2 => ("analytic Green's function", greens_function()),
            3 => ("VTI plane waves and stencil footprint", vti_plane_waves()),
            4 => ("solver residuals", solver_residuals()),
            5 | 6 => {
                let s = sweep.get_or_insert_with(scaling_sweep);
                let out = match s {
                    Ok(s) if id == 5 => complexity(s),
                    Ok(s) => mixed_precision(s),
                    Err(e) => Err(horst::HorstError::Numeric(e.to_string())),
                };
                (if id == 5 { "complexity trends" } else { "mixed-precision storage" }, out)
            }
            7 => ("sparse right-hand-side pruning", pruning()),
            8 => ("adjoint gradient", adjoint_gradient()),
            9 => ("inverse-crime inversion", inverse_crime()),
            10 => ("frequency ladder", frequency_ladder()),
            11 => ("reciprocity", reciprocity()),
            _ => ("TV denoising", tv_denoising()),
        };
        let secs = t0.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!("criterion {id:2} {} {name}: {detail} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(id);
        }
    }
    println!("acceptance: {} of {} criteria passed", 12 - skipped - failed.len(), 12 - skipped);
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        if strict {
            std::process::exit(1);
        }
    }
}
