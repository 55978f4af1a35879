//! Planar sections of a model as images and CSV tables.

use super::config::SliceAxis;
use crate::model::VtiModel;
use crate::{HorstError, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Magnitude of the V0 gradient, central differences inside and one-sided
/// differences on the boundary, in 1/s.
pub fn velocity_gradient_magnitude(model: &VtiModel) -> Vec<f64> {
    let g = &model.grid;
    let d = g.dims;
    (0..model.len())
        .map(|i| {
            let c = g.coords(i);
            let mut sum = 0.0;
            for a in 0..3 {
                if d[a] < 2 {
                    continue;
                }
                let mut lo = c;
                let mut hi = c;
                if c[a] > 0 {
                    lo[a] -= 1;
                }
                if c[a] + 1 < d[a] {
                    hi[a] += 1;
                }
                let dv = model.v0[g.index(hi[0], hi[1], hi[2])] - model.v0[g.index(lo[0], lo[1], lo[2])];
                let dx = (hi[a] - lo[a]) as f64 * g.spacing[a];
                sum += (dv / dx).powi(2);
            }
            sum.sqrt()
        })
        .collect()
}

/// A 2D section: `values[row * cols + col]`, rows along the slower of the
/// two remaining axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub overlay: Option<Vec<f64>>,
    /// Grid index of every pixel.
    pub cells: Vec<usize>,
}

pub fn extract_slice(model: &VtiModel, axis: SliceAxis, index: usize, overlay: bool) -> Result<Slice> {
    let g = &model.grid;
    let a = axis.index();
    if index >= g.dims[a] {
        return Err(HorstError::config(
            "slice.index",
            format!("index {index} is outside 0..{} along {axis:?}", g.dims[a]),
        ));
    }
    let (ra, ca) = match a {
        0 => (2, 1),
        1 => (2, 0),
        _ => (1, 0),
    };
    let (rows, cols) = (g.dims[ra], g.dims[ca]);
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut p = [0usize; 3];
            p[a] = index;
            p[ra] = r;
            p[ca] = c;
            cells.push(g.index(p[0], p[1], p[2]));
        }
    }
    let grad = overlay.then(|| velocity_gradient_magnitude(model));
    Ok(Slice {
        rows,
        cols,
        values: cells.iter().map(|&i| model.v0[i]).collect(),
        overlay: grad.map(|gm| cells.iter().map(|&i| gm[i]).collect()),
        cells,
    })
}

fn to_bytes(v: &[f64]) -> Vec<u8> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    v.iter()
        .map(|&x| {
            if hi > lo {
                ((x - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect()
}

/// Binary pixmap: velocity in every channel, or with an overlay the
/// normalised gradient magnitude in the red channel.
pub fn encode_ppm(slice: &Slice) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", slice.cols, slice.rows).into_bytes();
    let gray = to_bytes(&slice.values);
    let red = slice.overlay.as_ref().map(|o| to_bytes(o));
    for (k, &v) in gray.iter().enumerate() {
        let r = red.as_ref().map_or(v, |r| r[k]);
        out.extend_from_slice(&[r, v, v]);
    }
    out
}

/// CSV with one line per pixel; values use the shortest round-trip form.
pub fn encode_csv(model: &VtiModel, slice: &Slice) -> String {
    let mut s = String::from("row,col,x,y,z,v0");
    if slice.overlay.is_some() {
        s.push_str(",grad_mag");
    }
    s.push('\n');
    for (k, &cell) in slice.cells.iter().enumerate() {
        let c = model.grid.coords(cell);
        let p = model.grid.position(c[0], c[1], c[2]);
        s.push_str(&format!("{},{},{},{},{},{}", k / slice.cols, k % slice.cols, p[0], p[1], p[2], slice.values[k]));
        if let Some(o) = &slice.overlay {
            s.push_str(&format!(",{}", o[k]));
        }
        s.push('\n');
    }
    s
}

/// Writes `<dir>/<name>.ppm` and `<dir>/<name>.csv`; returns both paths.
pub fn export_slices(model: &VtiModel, axis: SliceAxis, index: usize, overlay: bool, dir: &Path, name: &str) -> Result<(PathBuf, PathBuf)> {
    let slice = extract_slice(model, axis, index, overlay)?;
    std::fs::create_dir_all(dir)?;
    let ppm = dir.join(format!("{name}.ppm"));
    let csv = dir.join(format!("{name}.csv"));
    std::fs::File::create(&ppm)?.write_all(&encode_ppm(&slice))?;
    std::fs::write(&csv, encode_csv(model, &slice))?;
    Ok((ppm, csv))
}
