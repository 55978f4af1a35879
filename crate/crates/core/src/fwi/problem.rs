//! Least-squares misfit, source-signature estimation and the adjoint-state
//! gradient for one frequency.

use super::dataset::{Acquisition, FreqGather};
use crate::discretize::{
    assemble_with_weights, build_rhs, hicks_coefficients, sample_receivers, AssembleOptions, CellWeights, CouplingStencil,
    ImpedanceMatrix, StencilWeightTable,
};
use crate::model::VtiModel;
use crate::solver::{factorize_operator_cached, FactorOptions, Factorization, SolveOptions, SymbolicCache};
use crate::sparse::{DenseCols, SparseCols};
use crate::{HorstError, Result, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `1/2 sum |sim - obs|^2` over live traces.
pub fn misfit(obs: &[C64], sim: &[C64], mask: &[bool]) -> Result<f64> {
    if obs.len() != sim.len() || obs.len() != mask.len() {
        return Err(HorstError::invalid(format!(
            "misfit shapes differ: {} observed, {} simulated, {} mask entries",
            obs.len(),
            sim.len(),
            mask.len()
        )));
    }
    Ok(0.5
        * obs
            .iter()
            .zip(sim)
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|((o, s), _)| (s - o).norm_sqr())
            .sum::<f64>())
}

/// Complex scalar `s` minimising `|s unit - obs|` over live traces, or
/// `None` when the unit traces vanish there.
pub fn estimate_signature(obs: &[C64], unit: &[C64], mask: &[bool]) -> Option<C64> {
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for ((o, u), &m) in obs.iter().zip(unit).zip(mask) {
        if m {
            num += u.conj() * o;
            den += u.norm_sqr();
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Physics and solver settings shared by modelling and inversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardSetup {
    pub assemble: AssembleOptions,
    pub factor: FactorOptions,
    pub solve: SolveOptions,
    /// Imaginary angular-frequency shift, 1/s (exponential time damping).
    pub time_damping: f64,
}

impl Default for ForwardSetup {
    fn default() -> Self {
        ForwardSetup {
            assemble: AssembleOptions::default(),
            factor: FactorOptions::default(),
            solve: SolveOptions::default(),
            time_damping: 0.0,
        }
    }
}

impl ForwardSetup {
    pub fn omega(&self, freq: f64) -> C64 {
        C64::new(2.0 * PI * freq, self.time_damping)
    }

    pub fn free_surface(&self) -> bool {
        self.assemble.pml.free_surface()
    }

    pub fn stencils(&self, model: &VtiModel, points: &[[f64; 3]]) -> Result<Vec<CouplingStencil>> {
        points
            .iter()
            .map(|&p| hicks_coefficients(&model.grid, p, self.free_surface()))
            .collect()
    }
}

/// Wavefields and receiver traces for unit source signatures.
pub struct UnitSimulation {
    pub operator: ImpedanceMatrix,
    pub factors: Factorization,
    pub wavefields: DenseCols,
    /// Traces `[src][rec]`.
    pub traces: Vec<C64>,
}

/// Solves for every source with unit signature and samples the receivers.
pub fn simulate_unit(
    model: &VtiModel,
    freq: f64,
    weights: &CellWeights,
    sources: &[CouplingStencil],
    receivers: &[CouplingStencil],
    setup: &ForwardSetup,
    cache: &SymbolicCache,
) -> Result<UnitSimulation> {
    let operator = assemble_with_weights(model, setup.omega(freq), weights, &setup.assemble)?;
    let mut factors = factorize_operator_cached(&operator, &setup.factor, cache)?;
    let rhs = build_rhs(&model.grid, sources, &vec![C64::new(1.0, 0.0); sources.len()])?;
    let (wavefields, _) = factors.solve(&rhs, &setup.solve)?;
    let traces = sample_receivers(&wavefields, receivers);
    Ok(UnitSimulation {
        operator,
        factors,
        wavefields,
        traces,
    })
}

/// Synthetic gather for `model` with the given signatures and all traces live.
pub fn simulate_gather(
    model: &VtiModel,
    acq: &Acquisition,
    freq: f64,
    signatures: &[C64],
    setup: &ForwardSetup,
    table: &StencilWeightTable,
) -> Result<FreqGather> {
    if signatures.len() != acq.sources.len() {
        return Err(HorstError::invalid("one signature per source is required"));
    }
    let weights = CellWeights::from_model(model, setup.omega(freq), table, &setup.assemble)?;
    let src = setup.stencils(model, &acq.sources)?;
    let rec = setup.stencils(model, &acq.receivers)?;
    let sim = simulate_unit(model, freq, &weights, &src, &rec, setup, &SymbolicCache::default())?;
    let mut g = FreqGather::new(freq, src.len(), rec.len());
    for s in 0..src.len() {
        for r in 0..rec.len() {
            g.data[s * rec.len() + r] = signatures[s] * sim.traces[s * rec.len() + r];
        }
    }
    g.signatures = signatures.to_vec();
    Ok(g)
}

/// Misfit and optional gradient with respect to the vertical velocity.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub misfit: f64,
    pub gradient: Option<Vec<f64>>,
    pub signatures: Vec<C64>,
    /// Sources without live traces, left out of this evaluation.
    pub excluded: Vec<usize>,
}

/// One monochromatic inversion problem on a fixed grid. Stencil weights
/// and absorbing-layer parameters are frozen at construction so the
/// gradient is the exact derivative of the evaluated misfit.
pub struct StageProblem<'a> {
    pub setup: &'a ForwardSetup,
    pub gather: &'a FreqGather,
    pub weights: CellWeights,
    pub sources: Vec<CouplingStencil>,
    pub receivers: Vec<CouplingStencil>,
    /// Re-estimate signatures at every evaluation instead of using the
    /// gather's.
    pub estimate_signatures: bool,
    analysis: SymbolicCache,
}

impl<'a> StageProblem<'a> {
    pub fn new(
        setup: &'a ForwardSetup,
        model: &VtiModel,
        acq: &Acquisition,
        gather: &'a FreqGather,
        table: &StencilWeightTable,
        estimate_signatures: bool,
    ) -> Result<Self> {
        gather.validate()?;
        if gather.n_src != acq.sources.len() || gather.n_rec != acq.receivers.len() {
            return Err(HorstError::invalid("gather does not match the acquisition"));
        }
        Ok(StageProblem {
            setup,
            gather,
            weights: CellWeights::from_model(model, setup.omega(gather.freq), table, &setup.assemble)?,
            sources: setup.stencils(model, &acq.sources)?,
            receivers: setup.stencils(model, &acq.receivers)?,
            estimate_signatures,
            analysis: SymbolicCache::default(),
        })
    }

    pub fn evaluate(&self, model: &VtiModel, with_gradient: bool) -> Result<Evaluation> {
        let g = self.gather;
        let nr = g.n_rec;
        let mut sim = simulate_unit(model, g.freq, &self.weights, &self.sources, &self.receivers, self.setup, &self.analysis)?;
        let mut signatures = Vec::with_capacity(g.n_src);
        let mut excluded = Vec::new();
        let mut residual = vec![C64::new(0.0, 0.0); g.n_src * nr];
        let mut j = 0.0;
        for s in 0..g.n_src {
            let unit = &sim.traces[s * nr..(s + 1) * nr];
            let live = g.live(s);
            let sig = if self.estimate_signatures {
                estimate_signature(g.trace(s), unit, live)
            } else if live.iter().any(|&m| m) {
                Some(g.signatures[s])
            } else {
                None
            };
            let Some(sig) = sig else {
                signatures.push(C64::new(0.0, 0.0));
                excluded.push(s);
                continue;
            };
            signatures.push(sig);
            for r in 0..nr {
                if live[r] {
                    let res = sig * unit[r] - g.trace(s)[r];
                    residual[s * nr + r] = res;
                    j += 0.5 * res.norm_sqr();
                }
            }
        }
        let gradient = if with_gradient {
            Some(self.gradient(model, &mut sim, &signatures, &residual)?)
        } else {
            None
        };
        Ok(Evaluation {
            misfit: j,
            gradient,
            signatures,
            excluded,
        })
    }

    /// `-Re sum_s lambda_s^T (dA/dv0) p_s` with `A^T lambda_s` the receiver
    /// injection of `sig_s conj(residual_s)`.
    fn gradient(&self, model: &VtiModel, sim: &mut UnitSimulation, sig: &[C64], residual: &[C64]) -> Result<Vec<f64>> {
        let nr = self.gather.n_rec;
        let n = model.len();
        let mut adj = SparseCols::new(n);
        // Dense scratch so overlapping receiver stencils merge into one entry
        // per node; dense surveys would otherwise repeat each node many times.
        let mut acc = vec![C64::new(0.0, 0.0); n];
        let mut touched = vec![false; n];
        let mut rows = Vec::new();
        for s in 0..self.gather.n_src {
            for (r, st) in self.receivers.iter().enumerate() {
                let w = sig[s] * residual[s * nr + r].conj();
                if w != C64::new(0.0, 0.0) {
                    for &(i, c) in &st.entries {
                        if !touched[i] {
                            touched[i] = true;
                            rows.push(i);
                        }
                        acc[i] += w * c;
                    }
                }
            }
            rows.sort_unstable();
            let col = rows.iter().map(|&i| (i, std::mem::replace(&mut acc[i], C64::new(0.0, 0.0)))).collect();
            rows.iter().for_each(|&i| touched[i] = false);
            rows.clear();
            adj.push(col);
        }
        let opts = SolveOptions {
            transpose: true,
            ..self.setup.solve.clone()
        };
        let (lambda, _) = sim.factors.solve(&adj, &opts)?;
        let op = &sim.operator;
        let wf = &sim.wavefields;
        let per_source: Vec<Vec<f64>> = (0..self.gather.n_src)
            .into_par_iter()
            .map(|s| {
                if adj.cols[s].is_empty() {
                    Vec::new()
                } else {
                    op.velocity_sensitivity(model, lambda.col(s), wf.col(s))
                }
            })
            .collect();
        let mut g = vec![0.0; n];
        for part in per_source.iter().filter(|p| !p.is_empty()) {
            for (gi, v) in g.iter_mut().zip(part) {
                *gi -= v;
            }
        }
        Ok(g)
    }
}
