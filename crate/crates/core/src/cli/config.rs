//! Run configuration: a JSON document with dotted-key overrides.

use super::survey::SurveySpec;
use crate::discretize::{AssembleOptions, PmlConfig, MIN_PML_WIDTH};
use crate::fwi::{ForwardSetup, InversionOptions, WolfeOptions};
use crate::model::{FrequencyPlan, DEFAULT_PPW_MIN};
use crate::solver::numeric::{DEFAULT_EPS_BLR, DEFAULT_PIVOT_THRESHOLD, EPS_BLR_RANGE};
use crate::solver::{Arithmetic, FactorMode, FactorOptions, SolveOptions};
use crate::{HorstError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Starting (or base) model.
    pub model: Option<PathBuf>,
    /// Model used to synthesise observed data.
    pub true_model: Option<PathBuf>,
    pub acquisition: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Stencil weight table; the built-in table is used when absent.
    pub weights: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            model: None,
            true_model: None,
            acquisition: None,
            dataset: None,
            weights: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub frequencies: Vec<f64>,
    pub ppw: f64,
    /// Velocity used for grid sizing; the model minimum when absent.
    pub v_min: Option<f64>,
    /// Fixed grid interval for every stage instead of the per-frequency rule.
    pub h: Option<f64>,
    pub cycles: usize,
    pub max_iter: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            frequencies: vec![2.0, 2.5, 3.0],
            ppw: 4.0,
            v_min: None,
            h: None,
            cycles: 1,
            max_iter: 15,
        }
    }
}

impl PlanConfig {
    pub fn build(&self, model_v_min: f64) -> Result<FrequencyPlan> {
        match self.h {
            Some(h) => FrequencyPlan::fixed_grid(&self.frequencies, h, self.max_iter, self.cycles),
            None => FrequencyPlan::from_frequencies(
                &self.frequencies,
                self.v_min.unwrap_or(model_v_min),
                self.ppw,
                self.max_iter,
                self.cycles,
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: FactorMode,
    pub arithmetic: Arithmetic,
    pub eps_blr: f64,
    pub pivot_threshold: f64,
    pub block_size: usize,
    pub prune: bool,
    pub deterministic: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: FactorMode::Fr,
            arithmetic: Arithmetic::Double,
            eps_blr: DEFAULT_EPS_BLR,
            pivot_threshold: DEFAULT_PIVOT_THRESHOLD,
            block_size: 32,
            prune: true,
            deterministic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub free_surface: bool,
    pub pml_width: usize,
    pub pml_reflection: f64,
    pub f_ref: f64,
    pub ppw_min: f64,
    /// Imaginary frequency shift, 1/s.
    pub time_damping: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            free_surface: true,
            pml_width: 10,
            pml_reflection: 1e-4,
            f_ref: 10.0,
            ppw_min: DEFAULT_PPW_MIN,
            time_damping: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub memory: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub initial_step: f64,
    pub min_rel_decrease: f64,
    pub estimate_signatures: bool,
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
    /// Weight of the final total-variation denoising; zero disables it.
    pub tv_lambda: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        let o = InversionOptions::default();
        InversionConfig {
            memory: o.memory,
            v_min: o.v_bounds[0],
            v_max: o.v_bounds[1],
            initial_step: o.initial_step,
            min_rel_decrease: o.min_rel_decrease,
            estimate_signatures: o.estimate_signatures,
            c1: o.wolfe.c1,
            c2: o.wolfe.c2,
            max_evals: o.wolfe.max_evals,
            tv_lambda: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n: Vec<usize>,
    pub modes: Vec<FactorMode>,
    pub eps: Vec<f64>,
    pub arithmetic: Arithmetic,
    pub nrhs: usize,
    /// Grid interval of the benchmark cubes, m.
    pub h: f64,
    pub velocity: f64,
    pub ppw: f64,
    pub pml_width: usize,
    /// Skip sizes whose predicted full-rank factors exceed this many bytes.
    pub max_factor_bytes: Option<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: vec![16, 24, 32],
            modes: vec![FactorMode::Fr, FactorMode::Blr, FactorMode::MpBlr],
            eps: vec![DEFAULT_EPS_BLR],
            arithmetic: Arithmetic::Single,
            nrhs: 64,
            h: 25.0,
            velocity: 2000.0,
            ppw: 4.0,
            pml_width: 8,
            max_factor_bytes: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    X,
    Y,
    Z,
}

impl SliceAxis {
    pub fn index(self) -> usize {
        match self {
            SliceAxis::X => 0,
            SliceAxis::Y => 1,
            SliceAxis::Z => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    pub axis: SliceAxis,
    pub index: usize,
    pub overlay: bool,
    pub name: String,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            axis: SliceAxis::Z,
            index: 0,
            overlay: false,
            name: "slice".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub g_samples: Vec<f64>,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            g_samples: crate::discretize::DEFAULT_G_SAMPLES.to_vec(),
            n_theta: 8,
            n_phi: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub plan: PlanConfig,
    pub solver: SolverConfig,
    pub physics: PhysicsConfig,
    pub inversion: InversionConfig,
    pub survey: SurveySpec,
    pub bench: BenchConfig,
    pub slice: SliceConfig,
    pub weights: WeightsConfig,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: PathsConfig::default(),
            plan: PlanConfig::default(),
            solver: SolverConfig::default(),
            physics: PhysicsConfig::default(),
            inversion: InversionConfig::default(),
            survey: SurveySpec::default(),
            bench: BenchConfig::default(),
            slice: SliceConfig::default(),
            weights: WeightsConfig::default(),
            threads: None,
        }
    }
}

fn check(ok: bool, key: &str, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HorstError::config(key, msg()))
    }
}

/// Parses an override value as JSON, falling back to a bare string.
fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn config_error(e: serde_json::Error) -> HorstError {
    let msg = e.to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .unwrap_or("config")
        .to_string();
    HorstError::config(key, msg)
}

impl RunConfig {
    /// Reads a configuration file; relative paths are taken relative to it.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text).map_err(|e| HorstError::config("config", format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_value(value, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Builds a configuration from defaults, a JSON document and `key=value`
    /// overrides.
    pub fn from_value(doc: Value, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(RunConfig::default()).expect("defaults serialise");
        merge(&mut tree, doc, "")?;
        for ov in overrides {
            let (key, val) = ov
                .split_once('=')
                .ok_or_else(|| HorstError::config(ov.clone(), "override must look like key=value"))?;
            set_dotted(&mut tree, key.trim(), parse_value(val.trim()))?;
        }
        let cfg: RunConfig = serde_json::from_value(tree).map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [&mut paths.model, &mut paths.true_model, &mut paths.acquisition, &mut paths.dataset, &mut paths.weights]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut paths.output_dir);
    }

    /// Range checks; every message names the offending key.
    pub fn validate(&self) -> Result<()> {
        let p = &self.plan;
        check(!p.frequencies.is_empty(), "plan.frequencies", || "at least one frequency is required".into())?;
        check(
            p.frequencies.iter().all(|f| f.is_finite() && *f > 0.0),
            "plan.frequencies",
            || "frequencies must be positive".into(),
        )?;
        check(p.frequencies.windows(2).all(|w| w[1] > w[0]), "plan.frequencies", || {
            "frequencies must increase".into()
        })?;
        check(p.ppw >= 3.0 && p.ppw.is_finite(), "plan.ppw", || format!("must be at least 3, got {}", p.ppw))?;
        if let Some(v) = p.v_min {
            check(v > 0.0 && v.is_finite(), "plan.v_min", || format!("must be positive, got {v}"))?;
        }
        if let Some(h) = p.h {
            check(h > 0.0 && h.is_finite(), "plan.h", || format!("must be positive, got {h}"))?;
        }
        check(p.cycles >= 1, "plan.cycles", || "at least one cycle is required".into())?;

        let s = &self.solver;
        if s.mode != FactorMode::Fr {
            check(
                s.eps_blr >= EPS_BLR_RANGE.0 && s.eps_blr <= EPS_BLR_RANGE.1,
                "solver.eps_blr",
                || format!("must lie in [{:e}, {:e}], got {}", EPS_BLR_RANGE.0, EPS_BLR_RANGE.1, s.eps_blr),
            )?;
        }
        check(
            s.mode != FactorMode::MpBlr || s.arithmetic == Arithmetic::Single,
            "solver.arithmetic",
            || "MP-BLR requires single arithmetic".into(),
        )?;
        check(s.pivot_threshold > 0.0 && s.pivot_threshold <= 1.0, "solver.pivot_threshold", || {
            format!("must lie in (0, 1], got {}", s.pivot_threshold)
        })?;
        check(s.block_size >= 1, "solver.block_size", || "must be at least 1".into())?;

        let ph = &self.physics;
        check(ph.pml_width == 0 || ph.pml_width >= MIN_PML_WIDTH, "physics.pml_width", || {
            format!("must be 0 or at least {MIN_PML_WIDTH}, got {}", ph.pml_width)
        })?;
        check(ph.pml_reflection > 0.0 && ph.pml_reflection < 1.0, "physics.pml_reflection", || {
            format!("must lie in (0, 1), got {}", ph.pml_reflection)
        })?;
        check(ph.f_ref > 0.0 && ph.f_ref.is_finite(), "physics.f_ref", || format!("must be positive, got {}", ph.f_ref))?;
        check(ph.ppw_min >= 3.0 && ph.ppw_min.is_finite(), "physics.ppw_min", || {
            format!("must be at least 3, got {}", ph.ppw_min)
        })?;
        check(ph.time_damping >= 0.0 && ph.time_damping.is_finite(), "physics.time_damping", || {
            format!("must be non-negative, got {}", ph.time_damping)
        })?;

        let inv = &self.inversion;
        self.inversion_options().validate().map_err(|e| match e {
            HorstError::Config { key, message } => HorstError::config(format!("inversion.{key}"), message),
            other => other,
        })?;
        check(inv.v_min < inv.v_max, "inversion.v_max", || "must exceed inversion.v_min".into())?;
        check(inv.tv_lambda >= 0.0 && inv.tv_lambda.is_finite(), "inversion.tv_lambda", || {
            format!("must be non-negative, got {}", inv.tv_lambda)
        })?;

        let b = &self.bench;
        check(!b.n.is_empty() && b.n.iter().all(|&n| n >= 4), "bench.n", || "sizes must be at least 4".into())?;
        check(!b.modes.is_empty(), "bench.modes", || "at least one mode is required".into())?;
        check(
            b.eps.iter().all(|&e| e >= EPS_BLR_RANGE.0 && e <= EPS_BLR_RANGE.1),
            "bench.eps",
            || format!("values must lie in [{:e}, {:e}]", EPS_BLR_RANGE.0, EPS_BLR_RANGE.1),
        )?;
        check(b.nrhs >= 1, "bench.nrhs", || "must be at least 1".into())?;
        check(b.h > 0.0 && b.velocity > 0.0, "bench.h", || "spacing and velocity must be positive".into())?;
        check(b.ppw >= DEFAULT_PPW_MIN, "bench.ppw", || format!("must be at least {DEFAULT_PPW_MIN}"))?;
        check(b.pml_width == 0 || b.pml_width >= MIN_PML_WIDTH, "bench.pml_width", || {
            format!("must be 0 or at least {MIN_PML_WIDTH}")
        })?;

        let w = &self.weights;
        check(!w.g_samples.is_empty(), "weights.g_samples", || "at least one sample is required".into())?;
        check(w.n_theta * w.n_phi >= 32, "weights.n_theta", || "need at least 32 directions".into())?;
        if let Some(t) = self.threads {
            check(t >= 1, "threads", || "must be at least 1".into())?;
        }
        self.survey.validate_ranges()?;
        Ok(())
    }

    pub fn inversion_options(&self) -> InversionOptions {
        let i = &self.inversion;
        InversionOptions {
            max_iter: self.plan.max_iter,
            memory: i.memory,
            v_bounds: [i.v_min, i.v_max],
            initial_step: i.initial_step,
            min_rel_decrease: i.min_rel_decrease,
            estimate_signatures: i.estimate_signatures,
            wolfe: WolfeOptions {
                c1: i.c1,
                c2: i.c2,
                max_evals: i.max_evals,
            },
        }
    }

    pub fn forward_setup(&self) -> ForwardSetup {
        let s = &self.solver;
        let ph = &self.physics;
        ForwardSetup {
            assemble: AssembleOptions {
                f_ref: ph.f_ref,
                ppw_min: ph.ppw_min,
                pml: PmlConfig {
                    width: ph.pml_width,
                    six_faces: !ph.free_surface,
                    reflection: ph.pml_reflection,
                },
            },
            factor: FactorOptions {
                mode: s.mode,
                arithmetic: s.arithmetic,
                eps_blr: s.eps_blr,
                pivot_threshold: s.pivot_threshold,
                deterministic: s.deterministic,
            },
            solve: SolveOptions {
                block_size: s.block_size,
                prune: s.prune,
                ..SolveOptions::default()
            },
            time_damping: ph.time_damping,
        }
    }

    /// Checks that the input files a subcommand reads exist.
    pub fn require_paths(&self, keys: &[&str]) -> Result<()> {
        for &key in keys {
            let p = match key {
                "paths.model" => &self.paths.model,
                "paths.true_model" => &self.paths.true_model,
                "paths.acquisition" => &self.paths.acquisition,
                "paths.dataset" => &self.paths.dataset,
                "paths.weights" => &self.paths.weights,
                other => return Err(HorstError::config(other, "unknown path key")),
            };
            match p {
                None => return Err(HorstError::config(key, "required for this command")),
                Some(p) if !p.exists() => {
                    return Err(HorstError::config(key, format!("{} does not exist", p.display())))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn merge(tree: &mut Value, doc: Value, prefix: &str) -> Result<()> {
    match doc {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                let Value::Object(obj) = &mut *tree else {
                    return Err(HorstError::config(prefix, "is not a section"));
                };
                let Some(slot) = obj.get_mut(&k) else {
                    return Err(HorstError::config(key, "unknown key"));
                };
                if v.is_object() && slot.is_object() {
                    merge(slot, v, &key)?;
                } else {
                    *slot = v;
                }
            }
            Ok(())
        }
        _ => Err(HorstError::config(if prefix.is_empty() { "config" } else { prefix }, "expected an object")),
    }
}

fn set_dotted(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(obj) = node else {
            return Err(HorstError::config(key, "is not a section"));
        };
        let Some(next) = obj.get_mut(*part) else {
            return Err(HorstError::config(key, "unknown key"));
        };
        if i + 1 == parts.len() {
            *next = value;
            return Ok(());
        }
        node = next;
    }
    Err(HorstError::config(key, "empty key"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn key_of(r: Result<RunConfig>) -> String {
        match r {
            Err(HorstError::Config { key, .. }) => key,
            other => panic!("expected a configuration error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_apply_and_parse_types() {
        let c = RunConfig::from_value(
            json!({"solver": {"mode": "BLR"}}),
            &["solver.eps_blr=1e-4".into(), "plan.frequencies=[1.7, 2.0]".into(), "paths.dataset=d.fdg".into()],
        )
        .unwrap();
        assert_eq!(c.solver.mode, FactorMode::Blr);
        assert_eq!(c.solver.eps_blr, 1e-4);
        assert_eq!(c.plan.frequencies, vec![1.7, 2.0]);
        assert_eq!(c.paths.dataset, Some(PathBuf::from("d.fdg")));
    }

    #[test]
    fn every_bad_knob_names_its_key() {
        let cases = [
            ("plan.ppw=2", "plan.ppw"),
            ("plan.frequencies=[3, 2]", "plan.frequencies"),
            ("plan.cycles=0", "plan.cycles"),
            ("physics.pml_width=4", "physics.pml_width"),
            ("physics.f_ref=-1", "physics.f_ref"),
            ("physics.pml_reflection=2", "physics.pml_reflection"),
            ("solver.block_size=0", "solver.block_size"),
            ("solver.pivot_threshold=0", "solver.pivot_threshold"),
            ("inversion.tv_lambda=-1", "inversion.tv_lambda"),
            ("inversion.memory=0", "inversion.memory"),
            ("inversion.initial_step=3", "inversion.initial_step"),
            ("bench.nrhs=0", "bench.nrhs"),
            ("threads=0", "threads"),
            ("solver.colour=1", "solver.colour"),
        ];
        for (ov, key) in cases {
            assert_eq!(key_of(RunConfig::from_value(json!({}), &[ov.into()])), key, "{ov}");
        }
        let blr = RunConfig::from_value(json!({"solver": {"mode": "BLR", "eps_blr": 0.5}}), &[]);
        assert_eq!(key_of(blr), "solver.eps_blr");
        let mp = RunConfig::from_value(json!({"solver": {"mode": "MP-BLR"}}), &[]);
        assert_eq!(key_of(mp), "solver.arithmetic");
        assert_eq!(key_of(RunConfig::from_value(json!({"nope": 1}), &[])), "nope");
    }

    #[test]
    fn missing_input_is_reported_by_key() {
        let c = RunConfig::from_value(json!({"paths": {"dataset": "/definitely/missing.fdg"}}), &[]).unwrap();
        match c.require_paths(&["paths.dataset"]) {
            Err(HorstError::Config { key, .. }) => assert_eq!(key, "paths.dataset"),
            other => panic!("{other:?}"),
        }
        match c.require_paths(&["paths.model"]) {
            Err(HorstError::Config { key, .. }) => assert_eq!(key, "paths.model"),
            other => panic!("{other:?}"),
        }
    }
}
