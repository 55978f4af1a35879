//! Monochromatic l-BFGS inversion of V0 and multiscale frequency continuation.

use super::dataset::{Acquisition, FreqDataset, FreqGather};
use super::optimize::{wolfe_line_search, Lbfgs, WolfeOptions, DEFAULT_MEMORY};
use super::problem::{misfit, Evaluation, ForwardSetup, StageProblem};
use crate::discretize::StencilWeightTable;
use crate::model::{resample_model, FrequencyPlan, VtiModel};
use crate::{HorstError, Result, C64};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Lower and upper V0 bounds, m/s.
    pub v_bounds: [f64; 2],
    /// Largest V0 change of the first step, as a fraction of the largest V0.
    pub initial_step: f64,
    /// Stage ends once an accepted step lowers the misfit by less than this
    /// fraction.
    pub min_rel_decrease: f64,
    pub estimate_signatures: bool,
    pub wolfe: WolfeOptions,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            max_iter: 15,
            memory: DEFAULT_MEMORY,
            v_bounds: [1400.0, 6000.0],
            initial_step: 0.02,
            min_rel_decrease: 1e-3,
            estimate_signatures: true,
            wolfe: WolfeOptions::default(),
        }
    }
}

impl InversionOptions {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.v_bounds;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(HorstError::config("v_bounds", format!("need 0 < lower < upper, got [{lo}, {hi}]")));
        }
        if !(self.initial_step > 0.0 && self.initial_step <= 1.0) {
            return Err(HorstError::config("initial_step", format!("must lie in (0, 1], got {}", self.initial_step)));
        }
        if !(self.min_rel_decrease >= 0.0 && self.min_rel_decrease < 1.0) {
            return Err(HorstError::config(
                "min_rel_decrease",
                format!("must lie in [0, 1), got {}", self.min_rel_decrease),
            ));
        }
        if self.memory == 0 {
            return Err(HorstError::config("memory", "l-BFGS memory must be at least 1"));
        }
        let w = &self.wolfe;
        if !(w.c1 > 0.0 && w.c1 < w.c2 && w.c2 < 1.0) || w.max_evals == 0 {
            return Err(HorstError::config("wolfe", "need 0 < c1 < c2 < 1 and at least one evaluation"));
        }
        Ok(())
    }
}

/// One row of the inversion history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub cycle: usize,
    pub stage: usize,
    pub freq_hz: f64,
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub grad_norm: f64,
    pub step_len: f64,
    pub n_facto: usize,
    pub wall_s: f64,
}

pub fn write_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HorstError::invalid(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| HorstError::invalid(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HorstError::invalid(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| HorstError::format(e.position().map_or(0, |p| p.byte()), e.to_string())))
        .collect()
}

#[derive(Clone, Debug)]
pub struct InversionState {
    pub model: VtiModel,
    pub memory: Lbfgs,
    pub history: Vec<HistoryRow>,
    pub stage: usize,
    pub cycle: usize,
    /// Factorizations performed so far.
    pub n_facto: usize,
    started: Instant,
}

impl InversionState {
    pub fn new(model: VtiModel, memory: usize) -> Self {
        InversionState {
            model,
            memory: Lbfgs::new(memory),
            history: Vec::new(),
            stage: 0,
            cycle: 0,
            n_facto: 0,
            started: Instant::now(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSummary {
    pub freq: f64,
    pub initial_misfit: f64,
    pub final_misfit: f64,
    /// Accepted model updates.
    pub iterations: usize,
    pub signatures: Vec<C64>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn masked(mut g: Vec<f64>, active: &[bool]) -> Vec<f64> {
    for (gi, &a) in g.iter_mut().zip(active) {
        if !a {
            *gi = 0.0;
        }
    }
    g
}

/// Inverts one frequency on the state's grid. Only V0 of non-water cells
/// changes, clamped to the bounds. On error the state keeps the last
/// accepted model.
pub fn invert_frequency(
    state: &mut InversionState,
    acq: &Acquisition,
    gather: &FreqGather,
    setup: &ForwardSetup,
    table: &StencilWeightTable,
    opts: &InversionOptions,
) -> Result<StageSummary> {
    opts.validate()?;
    let problem = StageProblem::new(setup, &state.model, acq, gather, table, opts.estimate_signatures)?;
    let active = state.model.active_mask();
    let [v_lo, v_hi] = opts.v_bounds;
    let freq = gather.freq;
    let energy = misfit(&gather.data, &vec![C64::new(0.0, 0.0); gather.data.len()], &gather.mask)?;

    let mut eval = problem.evaluate(&state.model, true)?;
    state.n_facto += 1;
    let mut j = eval.misfit;
    let mut g = masked(eval.gradient.take().expect("gradient requested"), &active);
    let initial = j;
    let record = |state: &mut InversionState, iter: usize, j: f64, g: &[f64], step: f64| {
        let row = HistoryRow {
            cycle: state.cycle,
            stage: state.stage,
            freq_hz: freq,
            iter,
            j,
            grad_norm: norm2(g),
            step_len: step,
            n_facto: state.n_facto,
            wall_s: state.started.elapsed().as_secs_f64(),
        };
        log::info!(
            "cycle {} stage {} f={:.3} Hz iter {}: J={:.6e} |g|={:.3e} step={:.3e}",
            row.cycle,
            row.stage,
            freq,
            iter,
            j,
            row.grad_norm,
            step
        );
        state.history.push(row);
    };
    record(state, 0, j, &g, 0.0);

    let mut iterations = 0;
    let mut signatures = eval.signatures.clone();
    // Data explained to single-precision storage accuracy.
    let converged = |j: f64| j <= 1e-14 * energy;
    if converged(j) || norm2(&g) == 0.0 {
        return Ok(StageSummary {
            freq,
            initial_misfit: initial,
            final_misfit: j,
            iterations,
            signatures,
        });
    }

    while iterations < opts.max_iter {
        let v_scale = state.model.v0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut d = state.memory.direction(&g, opts.initial_step * v_scale);
        let mut dphi0: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(dphi0 < 0.0) {
            state.memory.clear();
            d = state.memory.direction(&g, opts.initial_step * v_scale);
            dphi0 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        }
        let base = state.model.clone();
        let n_facto = &mut state.n_facto;
        let trial = |alpha: f64| -> Result<(f64, f64, (VtiModel, Evaluation))> {
            let mut m = base.clone();
            let mut free = vec![false; m.len()];
            for i in 0..m.len() {
                if d[i] != 0.0 {
                    let v = base.v0[i] + alpha * d[i];
                    m.v0[i] = v.clamp(v_lo, v_hi);
                    free[i] = v == m.v0[i];
                }
            }
            let e = problem.evaluate(&m, true)?;
            *n_facto += 1;
            let gt = e.gradient.as_ref().expect("gradient requested");
            let slope = (0..m.len()).filter(|&i| free[i]).map(|i| gt[i] * d[i]).sum();
            Ok((e.misfit, slope, (m, e)))
        };
        let out = wolfe_line_search(j, dphi0, 1.0, &opts.wolfe, trial)?;
        if !out.satisfied {
            log::warn!("stage at {freq} Hz: accepting step {} without the Wolfe conditions", out.alpha);
        }
        if !(out.value < j) {
            if !state.memory.is_empty() {
                log::warn!("no decrease along the quasi-Newton direction, restarting from steepest descent");
                state.memory.clear();
                continue;
            }
            log::warn!("no decrease along steepest descent at {freq} Hz, ending the stage");
            break;
        }
        let (m_new, mut e_new) = out.extra;
        let g_new = masked(e_new.gradient.take().expect("gradient requested"), &active);
        let s: Vec<f64> = m_new.v0.iter().zip(&base.v0).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = norm2(&s);
        state.memory.push(s, y);
        let rel = (j - out.value) / j;
        state.model = m_new;
        j = out.value;
        g = g_new;
        signatures = e_new.signatures;
        iterations += 1;
        record(state, iterations, j, &g, step);
        if rel < opts.min_rel_decrease || converged(j) {
            break;
        }
    }
    Ok(StageSummary {
        freq,
        initial_misfit: initial,
        final_misfit: j,
        iterations,
        signatures,
    })
}

fn same_spacing(model: &VtiModel, h: f64) -> bool {
    model.grid.spacing.iter().all(|&s| (s - h).abs() <= 1e-9 * h)
}

/// Model for a stage: passive fields come from the base model and V0 is
/// carried over from the current one, both on the stage grid.
fn stage_model(base: &VtiModel, current: &VtiModel, h: f64) -> Result<VtiModel> {
    if same_spacing(current, h) {
        return Ok(current.clone());
    }
    let mut m = if same_spacing(base, h) { base.clone() } else { resample_model(base, h)? };
    let v = resample_model(current, h)?;
    if v.grid.dims != m.grid.dims {
        return Err(HorstError::invalid("resampled models disagree on the stage grid"));
    }
    m.v0 = v.v0;
    Ok(m)
}

/// Runs every stage of every cycle in order. `on_stage` sees the state
/// after each stage.
#[allow(clippy::too_many_arguments)]
pub fn run_continuation<F>(
    plan: &FrequencyPlan,
    dataset: &FreqDataset,
    m0: &VtiModel,
    setup: &ForwardSetup,
    table: &StencilWeightTable,
    opts: &InversionOptions,
    mut on_stage: F,
) -> Result<(VtiModel, Vec<HistoryRow>)>
where
    F: FnMut(&InversionState, &StageSummary) -> Result<()>,
{
    plan.validate()?;
    opts.validate()?;
    dataset.validate()?;
    for st in &plan.stages {
        if dataset.gather(st.freq).is_none() {
            return Err(HorstError::invalid(format!("the dataset has no gather at {} Hz", st.freq)));
        }
    }
    let mut state = InversionState::new(m0.clone(), opts.memory);
    for cycle in 0..plan.cycles {
        for (k, st) in plan.stages.iter().enumerate() {
            let gather = dataset.gather(st.freq).expect("checked above");
            state.model = stage_model(m0, &state.model, st.h)?;
            state.memory.clear();
            state.cycle = cycle;
            state.stage = k;
            let stage_opts = InversionOptions {
                max_iter: st.max_iter,
                ..opts.clone()
            };
            let summary = invert_frequency(&mut state, &dataset.acquisition, gather, setup, table, &stage_opts)?;
            on_stage(&state, &summary)?;
        }
    }
    Ok((state.model, state.history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::PmlConfig;
    use crate::fwi::problem::simulate_gather;
    use crate::model::Grid;

    fn background() -> VtiModel {
        let grid = Grid::cubic([14, 14, 10], 50.0).unwrap();
        let mut m = VtiModel::homogeneous(grid.clone(), 2000.0, 2000.0).unwrap();
        for i in 0..m.len() {
            let [_, _, iz] = grid.coords(i);
            m.v0[i] = 1900.0 + 25.0 * iz as f64;
            m.epsilon[i] = 0.08;
            m.delta[i] = 0.03;
            m.q[i] = 200.0;
        }
        m
    }

    fn with_anomaly(m: &VtiModel) -> VtiModel {
        let mut t = m.clone();
        for i in 0..t.len() {
            let p = t.grid.coords(i).map(|c| c as f64);
            let r2 = (p[0] - 6.5).powi(2) + (p[1] - 6.5).powi(2) + (p[2] - 5.0).powi(2);
            t.v0[i] *= 1.0 + 0.05 * (-r2 / 4.0).exp();
        }
        t
    }

    fn setup() -> ForwardSetup {
        let mut s = ForwardSetup::default();
        s.assemble.pml = PmlConfig {
            width: 0,
            six_faces: false,
            ..Default::default()
        };
        s.time_damping = 2.0;
        s
    }

    fn acquisition() -> Acquisition {
        let mut sources = Vec::new();
        for a in [120.0, 320.0, 530.0] {
            for b in [140.0, 510.0] {
                sources.push([a, b, 420.0]);
            }
        }
        let mut receivers = Vec::new();
        for a in 0..6 {
            for b in 0..6 {
                receivers.push([70.0 + 100.0 * a as f64, 75.0 + 100.0 * b as f64, 30.0]);
            }
        }
        Acquisition {
            sources,
            receivers,
            reciprocal: true,
        }
    }

    fn dataset(truth: &VtiModel, freqs: &[f64]) -> FreqDataset {
        let acq = acquisition();
        let table = StencilWeightTable::default_table();
        let sig: Vec<C64> = (0..acq.sources.len()).map(|s| C64::new(1.0, 0.1 * s as f64)).collect();
        let gathers = freqs
            .iter()
            .map(|&f| simulate_gather(truth, &acq, f, &sig, &setup(), table).unwrap())
            .collect();
        FreqDataset {
            acquisition: acq,
            gathers,
        }
    }

    #[test]
    fn own_data_stops_at_the_convergence_check() {
        let m = background();
        let ds = dataset(&m, &[3.0]);
        let mut state = InversionState::new(m.clone(), 5);
        let s = invert_frequency(
            &mut state,
            &ds.acquisition,
            &ds.gathers[0],
            &setup(),
            StencilWeightTable::default_table(),
            &InversionOptions::default(),
        )
        .unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(state.n_facto, 1);
        assert_eq!(state.model, m);
    }

    #[test]
    fn toy_anomaly_misfit_drops_and_passive_fields_stay() {
        let m0 = background();
        let truth = with_anomaly(&m0);
        let ds = dataset(&truth, &[3.0, 4.0]);
        let plan = FrequencyPlan::fixed_grid(&[3.0, 4.0], 50.0, 8, 2).unwrap();
        let opts = InversionOptions::default();
        let mut finals: Vec<(usize, f64, f64)> = Vec::new();
        let (m, hist) = run_continuation(&plan, &ds, &m0, &setup(), StencilWeightTable::default_table(), &opts, |st, s| {
            finals.push((st.cycle, s.freq, s.final_misfit));
            Ok(())
        })
        .unwrap();
        assert_eq!((m.delta.clone(), m.epsilon.clone(), m.rho.clone(), m.q.clone()), (m0.delta.clone(), m0.epsilon.clone(), m0.rho.clone(), m0.q.clone()));
        let first = hist.iter().find(|r| r.stage == 0 && r.cycle == 0).unwrap().j;
        let last_first_stage = hist.iter().filter(|r| r.stage == 0 && r.cycle == 0).last().unwrap().j;
        assert!(last_first_stage <= 0.1 * first, "{last_first_stage} vs {first}");
        // Misfit never increases inside a stage.
        for w in hist.windows(2) {
            if w[0].cycle == w[1].cycle && w[0].stage == w[1].stage {
                assert!(w[1].j <= w[0].j);
            }
        }
        // A second cycle does not end worse than the first at any frequency.
        for &(c, f, j) in finals.iter().filter(|x| x.0 == 1) {
            let j1 = finals.iter().find(|x| x.0 == c - 1 && x.1 == f).unwrap().2;
            assert!(j <= j1 * (1.0 + 1e-12), "{f} Hz: cycle 2 {j} vs cycle 1 {j1}");
        }
        let err = |v: &[f64]| v.iter().zip(&truth.v0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(err(&m.v0) < err(&m0.v0));
    }

    #[test]
    fn missing_frequency_fails_before_work() {
        let m0 = background();
        let ds = dataset(&m0, &[3.0]);
        let plan = FrequencyPlan::fixed_grid(&[3.0, 5.0], 50.0, 2, 1).unwrap();
        let mut called = false;
        let r = run_continuation(&plan, &ds, &m0, &setup(), StencilWeightTable::default_table(), &InversionOptions::default(), |_, _| {
            called = true;
            Ok(())
        });
        assert!(r.is_err());
        assert!(!called);
    }

    #[test]
    fn history_csv_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let rows = vec![HistoryRow {
            cycle: 0,
            stage: 1,
            freq_hz: 2.5,
            iter: 3,
            j: 1.25,
            grad_norm: 0.5,
            step_len: 10.0,
            n_facto: 7,
            wall_s: 1.5,
        }];
        write_history_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("cycle,stage,freq_hz,iter,J,grad_norm,step_len,n_facto,wall_s"));
        assert_eq!(read_history_csv(&path).unwrap(), rows);
    }
}
