//! Synthetic ocean-bottom survey: layered base model, Gaussian anomalies,
//! staggered node grid and a regular shot carpet.

use crate::fwi::Acquisition;
use crate::model::{density_from_velocity, Grid, VtiModel};
use crate::{HorstError, Result};
use serde::{Deserialize, Serialize};

/// Field node spacing, m.
pub const FIELD_NODE_PITCH: f64 = 375.0;
/// Field shot interval and source-line interval, m.
pub const FIELD_SHOT_PITCH: [f64; 2] = [18.75, 37.5];

/// Smooth velocity perturbation `amplitude * exp(-r^2 / (2 radius^2))`,
/// relative to the base velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anomaly {
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: f64,
}

/// Layered starting model: a water layer over sediments whose velocity
/// grows linearly below the seabed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseModelSpec {
    pub dims: [usize; 3],
    pub h: f64,
    pub water_cells: usize,
    pub v_water: f64,
    pub v_seabed: f64,
    /// Velocity increase per metre below the seabed, 1/s.
    pub gradient: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub q: f64,
}

impl Default for BaseModelSpec {
    fn default() -> Self {
        BaseModelSpec {
            dims: [48, 48, 48],
            h: 25.0,
            water_cells: 4,
            v_water: 1500.0,
            v_seabed: 1800.0,
            gradient: 0.6,
            epsilon: 0.1,
            delta: 0.04,
            q: 150.0,
        }
    }
}

impl BaseModelSpec {
    pub fn build(&self) -> Result<VtiModel> {
        let grid = Grid::cubic(self.dims, self.h)?;
        let mut m = VtiModel::homogeneous(grid.clone(), self.v_seabed, 1000.0)?;
        m.set_water_layer(self.water_cells);
        let w = self.water_cells.min(self.dims[2]);
        for i in 0..m.len() {
            let iz = grid.coords(i)[2];
            if iz < w {
                m.v0[i] = self.v_water;
            } else {
                m.v0[i] = self.v_seabed + self.gradient * (iz - w) as f64 * self.h;
                m.epsilon[i] = self.epsilon;
                m.delta[i] = self.delta;
                m.q[i] = self.q;
            }
        }
        m.rho = density_from_velocity(&m)?;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveySpec {
    /// Multiplier applied to the field pitches when they are not given.
    pub scale: f64,
    pub node_pitch: Option<f64>,
    /// Inline and crossline shot pitch.
    pub shot_pitch: Option<[f64; 2]>,
    /// Node depth; the seabed of each column when absent.
    pub node_depth: Option<f64>,
    pub shot_depth: f64,
    /// Lateral distance kept clear of the model edges.
    pub margin: f64,
    pub anomalies: Vec<Anomaly>,
    pub base: BaseModelSpec,
}

impl Default for SurveySpec {
    fn default() -> Self {
        SurveySpec {
            scale: 0.125,
            node_pitch: None,
            shot_pitch: None,
            node_depth: None,
            shot_depth: 10.0,
            margin: 250.0,
            anomalies: vec![Anomaly {
                center: [587.5, 587.5, 600.0],
                radius: 100.0,
                amplitude: 0.05,
            }],
            base: BaseModelSpec::default(),
        }
    }
}

impl SurveySpec {
    pub fn node_pitch(&self) -> f64 {
        self.node_pitch.unwrap_or(FIELD_NODE_PITCH * self.scale)
    }

    pub fn shot_pitch(&self) -> [f64; 2] {
        self.shot_pitch
            .unwrap_or([FIELD_SHOT_PITCH[0] * self.scale, FIELD_SHOT_PITCH[1] * self.scale])
    }

    pub(crate) fn validate_ranges(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(HorstError::config(format!("survey.{key}"), msg));
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale", format!("must be positive, got {}", self.scale));
        }
        if !(self.node_pitch() > 0.0) {
            return bad("node_pitch", "must be positive".into());
        }
        if !self.shot_pitch().iter().all(|p| *p > 0.0) {
            return bad("shot_pitch", "must be positive".into());
        }
        if !(self.margin >= 0.0) {
            return bad("margin", "must be non-negative".into());
        }
        if !(self.shot_depth >= 0.0) {
            return bad("shot_depth", "must be non-negative".into());
        }
        for a in &self.anomalies {
            if !(a.radius > 0.0 && a.amplitude.is_finite() && a.amplitude > -1.0) {
                return bad("anomalies", "radius must be positive and amplitude above -1".into());
            }
        }
        Ok(())
    }
}

/// Models and acquisition of an inverse-crime experiment.
#[derive(Clone, Debug)]
pub struct Survey {
    pub true_model: VtiModel,
    pub start_model: VtiModel,
    pub acquisition: Acquisition,
}

/// Seabed depth below a lateral position, from the water column of the
/// nearest grid column.
fn seabed_depth(model: &VtiModel, x: f64, y: f64) -> f64 {
    let g = &model.grid;
    let ix = (((x - g.origin[0]) / g.spacing[0]).round() as usize).min(g.dims[0] - 1);
    let iy = (((y - g.origin[1]) / g.spacing[1]).round() as usize).min(g.dims[1] - 1);
    let w = model.water_depth_index[ix * g.dims[1] + iy].min(g.dims[2] - 1);
    g.origin[2] + w as f64 * g.spacing[2]
}

fn axis_positions(lo: f64, hi: f64, pitch: f64, shift: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut v = lo + shift;
    while v <= hi + 1e-9 {
        out.push(v);
        v += pitch;
    }
    out
}

/// Adds the anomalies to a copy of `base` and lays out nodes and shots.
/// Nodes act as sources (reciprocity) and shots as receivers.
pub fn synthesize_survey(spec: &SurveySpec, base: &VtiModel) -> Result<Survey> {
    spec.validate_ranges()?;
    let g = &base.grid;
    let ext = g.extent();
    let mut truth = base.clone();
    for a in &spec.anomalies {
        if !g.contains(a.center) {
            return Err(HorstError::invalid(format!("anomaly centre {:?} lies outside the model", a.center)));
        }
        for i in 0..truth.len() {
            if truth.is_water(i) {
                continue;
            }
            let c = g.coords(i);
            let p = g.position(c[0], c[1], c[2]);
            let r2: f64 = (0..3).map(|k| (p[k] - a.center[k]).powi(2)).sum();
            truth.v0[i] += base.v0[i] * a.amplitude * (-r2 / (2.0 * a.radius * a.radius)).exp();
        }
    }

    let lo = [g.origin[0] + spec.margin, g.origin[1] + spec.margin];
    let hi = [g.origin[0] + ext[0] - spec.margin, g.origin[1] + ext[1] - spec.margin];
    if lo[0] > hi[0] || lo[1] > hi[1] {
        return Err(HorstError::config("survey.margin", "leaves no room for the acquisition"));
    }
    let pitch = spec.node_pitch();
    let mut nodes = Vec::new();
    for (row, y) in axis_positions(lo[1], hi[1], pitch, 0.0).into_iter().enumerate() {
        let shift = if row % 2 == 1 { 0.5 * pitch } else { 0.0 };
        for x in axis_positions(lo[0], hi[0], pitch, shift) {
            let z = spec.node_depth.unwrap_or_else(|| seabed_depth(base, x, y));
            nodes.push([x, y, z]);
        }
    }
    let [dx, dy] = spec.shot_pitch();
    let mut shots = Vec::new();
    for y in axis_positions(lo[1], hi[1], dy, 0.0) {
        for x in axis_positions(lo[0], hi[0], dx, 0.0) {
            shots.push([x, y, g.origin[2] + spec.shot_depth]);
        }
    }
    if nodes.is_empty() {
        return Err(HorstError::config("survey.node_pitch", "no node fits inside the model"));
    }
    for p in nodes.iter().chain(&shots) {
        if !g.contains(*p) {
            return Err(HorstError::invalid(format!("acquisition point {p:?} lies outside the model")));
        }
    }
    Ok(Survey {
        true_model: truth,
        start_model: base.clone(),
        acquisition: Acquisition {
            sources: nodes,
            receivers: shots,
            reciprocal: true,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SurveySpec {
        SurveySpec {
            base: BaseModelSpec {
                dims: [24, 24, 20],
                ..Default::default()
            },
            margin: 100.0,
            node_pitch: Some(100.0),
            shot_pitch: Some([50.0, 100.0]),
            anomalies: vec![],
            ..Default::default()
        }
    }

    #[test]
    fn default_pitches_follow_the_scale() {
        let s = SurveySpec::default();
        assert_eq!(s.node_pitch(), 375.0 / 8.0);
        assert_eq!(s.shot_pitch(), [18.75 / 8.0, 37.5 / 8.0]);
    }

    #[test]
    fn no_anomaly_gives_identical_models() {
        let s = spec();
        let base = s.base.build().unwrap();
        let sv = synthesize_survey(&s, &base).unwrap();
        assert_eq!(sv.true_model, sv.start_model);
        assert!(sv.acquisition.reciprocal);
        assert!(!sv.acquisition.sources.is_empty());
        // Nodes sit on the seabed.
        for p in &sv.acquisition.sources {
            assert_eq!(p[2], 4.0 * 25.0);
        }
        // Staggered rows alternate their first x.
        let first_x: Vec<f64> = [100.0, 200.0]
            .iter()
            .map(|y| sv.acquisition.sources.iter().find(|p| p[1] == *y).unwrap()[0])
            .collect();
        assert_eq!(first_x, vec![100.0, 150.0]);
    }

    #[test]
    fn anomaly_integral_matches_gaussian_volume() {
        let mut s = spec();
        s.base.dims = [40, 40, 40];
        s.base.water_cells = 0;
        let (sigma, amp) = (60.0, 0.05);
        s.anomalies = vec![Anomaly {
            center: [487.5, 500.0, 512.5],
            radius: sigma,
            amplitude: amp,
        }];
        let base = s.base.build().unwrap();
        let sv = synthesize_survey(&s, &base).unwrap();
        let h3 = 25.0f64.powi(3);
        let integral: f64 = (0..base.len())
            .map(|i| (sv.true_model.v0[i] - base.v0[i]) / base.v0[i] * h3)
            .sum();
        let exact = amp * (2.0 * std::f64::consts::PI).powf(1.5) * sigma.powi(3);
        assert!((integral - exact).abs() <= 0.01 * exact, "{integral} vs {exact}");
        // Passive fields are untouched.
        assert_eq!(sv.true_model.rho, base.rho);
    }

    #[test]
    fn anomaly_outside_is_rejected() {
        let mut s = spec();
        s.anomalies = vec![Anomaly {
            center: [1e5, 0.0, 0.0],
            radius: 10.0,
            amplitude: 0.1,
        }];
        let base = s.base.build().unwrap();
        assert!(synthesize_survey(&s, &base).is_err());
    }
}
