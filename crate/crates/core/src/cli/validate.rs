//! Analytic-oracle checks run by the `validate` subcommand.

use crate::discretize::{
    assemble_operator, max_dispersion_error, octant_directions, AssembleOptions, PmlConfig, StencilWeightTable,
    StencilWeights,
};
use crate::fwi::{simulate_gather, tv_denoise, tv_objective, total_variation, Acquisition, ForwardSetup, StageProblem};
use crate::model::{grid_interval_for_frequency, Grid, VtiModel, DEFAULT_PPW_MIN};
use crate::solver::{factorize_operator, Arithmetic, FactorOptions, SolveOptions};
use crate::sparse::SparseCols;
use crate::{Result, C64};
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            pass: value >= limit,
        }
    }
}

/// Largest phase-velocity error at four points per wavelength, for the
/// tabulated weights and for the 7-point baseline.
pub fn dispersion_at_four_ppw(table: &StencilWeightTable) -> (f64, f64) {
    let dirs = octant_directions(16, 16);
    (
        max_dispersion_error(&table.lookup(4.0), 4.0, &dirs),
        max_dispersion_error(&StencilWeights::SEVEN_POINT, 4.0, &dirs),
    )
}

/// Relative L2 misfit between the simulated field of a point source at the
/// cube centre and `-rho h^3 exp(ikr) / (4 pi r)`, over nodes at least five
/// cells from the source and from the absorbing layers.
pub fn greens_function_error(n: usize, pml_width: usize, ppw: f64, arithmetic: Arithmetic) -> Result<f64> {
    let h = 25.0;
    let (v, rho) = (2000.0, 1800.0);
    let grid = Grid::cubic([n, n, n], h)?;
    let model = VtiModel::homogeneous(grid.clone(), v, rho)?;
    let freq = v / (ppw * h);
    let omega = 2.0 * PI * freq;
    let opts = AssembleOptions {
        pml: PmlConfig {
            width: pml_width,
            six_faces: true,
            ..Default::default()
        },
        ..Default::default()
    };
    let op = assemble_operator(&model, C64::new(omega, 0.0), &opts)?;
    let mut f = factorize_operator(
        &op,
        &FactorOptions {
            arithmetic,
            ..Default::default()
        },
    )?;
    let c = n / 2;
    let src = grid.index(c, c, c);
    let mut rhs = SparseCols::new(grid.len());
    rhs.push(vec![(src, C64::new(1.0, 0.0))]);
    let (x, _) = f.solve(&rhs, &SolveOptions::default())?;
    let k = omega / v;
    let lo = pml_width + 5;
    let hi = n - 1 - pml_width - 5;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..grid.len() {
        let p = grid.coords(i);
        if p.iter().any(|&q| q < lo || q > hi) {
            continue;
        }
        let r_cells = ((0..3).map(|a| (p[a] as f64 - c as f64).powi(2)).sum::<f64>()).sqrt();
        if r_cells < 5.0 {
            continue;
        }
        let r = r_cells * h;
        let exact = -C64::new(0.0, k * r).exp() * (rho * h * h * h / (4.0 * PI * r));
        num += (x.col(0)[i] - exact).norm_sqr();
        den += exact.norm_sqr();
    }
    if den == 0.0 {
        return Err(crate::HorstError::invalid("no node lies in the comparison annulus"));
    }
    Ok((num / den).sqrt())
}

/// Relative difference between the traces of a source at `a` recorded at
/// `b` and of a source at `b` recorded at `a`, with elliptic anisotropy.
pub fn reciprocity_error(n: usize) -> Result<f64> {
    let grid = Grid::cubic([n, n, n], 50.0)?;
    let mut m = VtiModel::homogeneous(grid.clone(), 2000.0, 2000.0)?;
    for i in 0..m.len() {
        let c = grid.coords(i);
        m.v0[i] = 1900.0 + 30.0 * c[2] as f64 + 7.0 * c[0] as f64;
        m.epsilon[i] = 0.1;
        m.delta[i] = 0.1;
        m.q[i] = 120.0;
    }
    let setup = ForwardSetup::default();
    let e = 50.0 * (n - 1) as f64;
    let a = [0.31 * e, 0.42 * e, 0.37 * e];
    let b = [0.66 * e, 0.58 * e, 0.61 * e];
    let table = StencilWeightTable::default_table();
    let one = [C64::new(1.0, 0.0)];
    let ab = simulate_gather(&m, &Acquisition { sources: vec![a], receivers: vec![b], reciprocal: false }, 4.0, &one, &setup, table)?;
    let ba = simulate_gather(&m, &Acquisition { sources: vec![b], receivers: vec![a], reciprocal: false }, 4.0, &one, &setup, table)?;
    Ok((ab.data[0] - ba.data[0]).norm() / ab.data[0].norm())
}

/// Largest relative error between adjoint-state and centred finite-difference
/// derivatives at a few cells of a heterogeneous VTI model.
pub fn gradient_fd_error(n: usize) -> Result<f64> {
    let grid = Grid::cubic([n, n, n], 50.0)?;
    let mut truth = VtiModel::homogeneous(grid.clone(), 2000.0, 2000.0)?;
    for i in 0..truth.len() {
        let c = grid.coords(i);
        truth.v0[i] = 1850.0 + 20.0 * c[2] as f64 + 3.0 * c[1] as f64;
        truth.epsilon[i] = 0.1;
        truth.delta[i] = 0.05;
        truth.q[i] = 100.0;
    }
    let mut start = truth.clone();
    start.v0.iter_mut().for_each(|v| *v *= 0.98);
    let mut setup = ForwardSetup::default();
    setup.assemble.pml = PmlConfig {
        width: 0,
        six_faces: false,
        ..Default::default()
    };
    let e = 50.0 * (n - 1) as f64;
    let acq = Acquisition {
        sources: vec![[0.3 * e, 0.3 * e, 0.6 * e], [0.7 * e, 0.6 * e, 0.7 * e]],
        receivers: (0..8).map(|i| [0.1 * e + 0.1 * e * i as f64, 0.5 * e, 0.1 * e]).collect(),
        reciprocal: true,
    };
    let table = StencilWeightTable::default_table();
    let gather = simulate_gather(&truth, &acq, 4.0, &[C64::new(1.0, 0.0); 2], &setup, table)?;
    let problem = StageProblem::new(&setup, &start, &acq, &gather, table, true)?;
    let g = problem.evaluate(&start, true)?.gradient.expect("gradient requested");
    let mut worst: f64 = 0.0;
    for c in [[n / 2, n / 3, n / 2], [n / 3, n / 2, 2 * n / 3], [2 * n / 3, n / 2, n / 3]] {
        let i = grid.index(c[0], c[1], c[2]);
        let dv = 0.5;
        let mut mp = start.clone();
        mp.v0[i] += dv;
        let mut mm = start.clone();
        mm.v0[i] -= dv;
        let fd = (problem.evaluate(&mp, false)?.misfit - problem.evaluate(&mm, false)?.misfit) / (2.0 * dv);
        worst = worst.max((fd - g[i]).abs() / g[i].abs());
    }
    Ok(worst)
}

/// Runs the quick oracle suite.
pub fn run_validation(table: &StencilWeightTable) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let (opt, seven) = dispersion_at_four_ppw(table);
    out.push(Check::at_most("dispersion error, optimised 27-point, G=4", opt, 0.01));
    out.push(Check::at_least("dispersion error, 7-point baseline, G=4", seven, 0.01));
    let ladder = [
        (2.5, 150.0),
        (3.5, 100.0),
        (5.0, 75.0),
        (6.7, 56.0),
        (7.6, 50.0),
        (8.5, 45.0),
        (10.1, 37.5),
        (11.6, 32.5),
        (13.0, 30.0),
    ];
    let worst = ladder
        .iter()
        .map(|&(f, h)| grid_interval_for_frequency(f, 1500.0, 4.0, DEFAULT_PPW_MIN).map(|got| (got - h).abs() / h))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(Check::at_most("grid-interval ladder, relative deviation", worst, 0.07));
    out.push(Check::at_most(
        "Green's function, 48^3, 4 ppw, relative L2",
        greens_function_error(48, 8, 4.0, Arithmetic::Single)?,
        0.05,
    ));
    out.push(Check::at_most("reciprocity, relative difference", reciprocity_error(20)?, 1e-6));
    out.push(Check::at_most("adjoint gradient vs finite differences", gradient_fd_error(14)?, 1e-4));
    let dims = [12, 10, 8];
    let noisy: Vec<f64> = (0..960)
        .map(|i| if i / 80 < 6 { 2000.0 } else { 2400.0 } + 40.0 * ((i * 7919 % 97) as f64 / 97.0 - 0.5))
        .collect();
    let u = tv_denoise(&noisy, dims, 30.0);
    out.push(Check::at_most(
        "TV denoising, objective ratio",
        tv_objective(&u, &noisy, dims, 30.0) / tv_objective(&noisy, &noisy, dims, 30.0),
        1.0,
    ));
    out.push(Check::at_most(
        "TV denoising, variation ratio",
        total_variation(&u, dims) / total_variation(&noisy, dims),
        1.0,
    ));
    Ok(out)
}
