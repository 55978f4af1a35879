use crate::{HorstError, Result};
use serde::{Deserialize, Serialize};

/// Smallest points-per-wavelength the discretization accepts.
pub const DEFAULT_PPW_MIN: f64 = 3.8;

/// Grid intervals offered between 25 m and 150 m.
const CATALOG: [f64; 11] = [25.0, 28.0, 30.0, 32.5, 37.5, 45.0, 50.0, 56.0, 75.0, 100.0, 150.0];

fn floor_2sf(x: f64) -> f64 {
    let e = x.log10().floor() - 1.0;
    let s = 10f64.powf(e);
    (x / s * (1.0 + 1e-12)).floor() * s
}

fn ceil_2sf(x: f64) -> f64 {
    let e = x.log10().floor() - 1.0;
    let s = 10f64.powf(e);
    (x / s * (1.0 - 1e-12)).ceil() * s
}

fn catalog_down(x: f64) -> f64 {
    if x >= CATALOG[0] - 1e-9 && x <= CATALOG[CATALOG.len() - 1] * (1.0 + 1e-12) {
        CATALOG
            .iter()
            .rev()
            .find(|&&c| c <= x * (1.0 + 1e-12))
            .copied()
            .unwrap_or(CATALOG[0])
    } else {
        floor_2sf(x)
    }
}

fn catalog_up(x: f64) -> f64 {
    if x >= CATALOG[0] * (1.0 - 1e-12) && x <= CATALOG[CATALOG.len() - 1] + 1e-9 {
        CATALOG.iter().find(|&&c| c >= x * (1.0 - 1e-12)).copied().unwrap_or(x)
    } else if x < CATALOG[0] && ceil_2sf(x) > CATALOG[0] {
        CATALOG[0]
    } else {
        ceil_2sf(x)
    }
}

/// Grid interval for frequency `f` given the slowest velocity and a target
/// points-per-wavelength. The raw interval is moved to the next coarser
/// catalog value when that still honours `ppw_min`, and to the next finer one
/// otherwise.
pub fn grid_interval_for_frequency(f: f64, v_min: f64, ppw: f64, ppw_min: f64) -> Result<f64> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(HorstError::invalid(format!("frequency must be positive, got {f}")));
    }
    if !(v_min > 0.0 && v_min.is_finite()) {
        return Err(HorstError::invalid(format!("minimum velocity must be positive, got {v_min}")));
    }
    if !(ppw >= 3.0) {
        return Err(HorstError::invalid(format!("points per wavelength must be at least 3, got {ppw}")));
    }
    let h_cap = v_min / (ppw_min * f);
    let raw = (v_min / (ppw * f)).min(h_cap);
    let up = catalog_up(raw);
    if up <= h_cap * (1.0 + 1e-12) {
        return Ok(up);
    }
    let mut down = catalog_down(raw);
    while down > h_cap * (1.0 + 1e-12) {
        down = catalog_down(down * (1.0 - 1e-9));
    }
    Ok(down)
}

/// One frequency of a continuation schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub freq: f64,
    /// Grid interval used for this frequency, m.
    pub h: f64,
    pub max_iter: usize,
}

/// Multiscale schedule: increasing frequencies, each with its grid interval,
/// repeated over one or more cycles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub stages: Vec<Stage>,
    pub cycles: usize,
}

impl FrequencyPlan {
    /// Grid intervals derived from `v_min` and `ppw` for every frequency.
    pub fn from_frequencies(freqs: &[f64], v_min: f64, ppw: f64, max_iter: usize, cycles: usize) -> Result<Self> {
        let stages = freqs
            .iter()
            .map(|&f| {
                Ok(Stage {
                    freq: f,
                    h: grid_interval_for_frequency(f, v_min, ppw, DEFAULT_PPW_MIN)?,
                    max_iter,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let plan = FrequencyPlan { stages, cycles };
        plan.validate()?;
        Ok(plan)
    }

    /// Every frequency on one fixed grid interval.
    pub fn fixed_grid(freqs: &[f64], h: f64, max_iter: usize, cycles: usize) -> Result<Self> {
        let plan = FrequencyPlan {
            stages: freqs.iter().map(|&f| Stage { freq: f, h, max_iter }).collect(),
            cycles,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Field-scale schedule: 13 frequencies from 1.7 Hz to 8.55 Hz followed by
    /// 5 frequencies up to 13 Hz, on the catalog intervals for 1500 m/s at 4 ppw.
    pub fn reference_schedule(max_iter: usize) -> Result<Self> {
        let mut freqs: Vec<f64> = (0..13).map(|i| 1.7 + (8.55 - 1.7) * i as f64 / 12.0).collect();
        freqs.extend((1..=5).map(|i| 8.55 + (13.0 - 8.55) * i as f64 / 5.0));
        FrequencyPlan::from_frequencies(&freqs, 1500.0, 4.0, max_iter, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(HorstError::config("plan.frequencies", "at least one frequency is required"));
        }
        if self.cycles == 0 {
            return Err(HorstError::config("plan.cycles", "must be at least 1"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !(s.freq > 0.0 && s.freq.is_finite()) {
                return Err(HorstError::config("plan.frequencies", format!("stage {i} has frequency {}", s.freq)));
            }
            if !(s.h > 0.0 && s.h.is_finite()) {
                return Err(HorstError::config("plan.h", format!("stage {i} has interval {}", s.h)));
            }
            if i > 0 {
                let p = &self.stages[i - 1];
                if s.freq <= p.freq {
                    return Err(HorstError::config("plan.frequencies", "frequencies must increase strictly"));
                }
                if s.h > p.h {
                    return Err(HorstError::config("plan.h", "grid intervals must not increase with frequency"));
                }
            }
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.freq).collect()
    }
}
