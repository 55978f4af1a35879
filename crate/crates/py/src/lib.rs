//! Python module `horst`: models, forward modelling, dispersion analysis and
//! the command-line entry point.

use horst::discretize::{dispersion_error, direction, StencilWeightTable, StencilWeights};
use horst::fwi::{simulate_gather, Acquisition, ForwardSetup};
use horst::model::{grid_interval_for_frequency, read_model, write_model, Grid, VtiModel, DEFAULT_PPW_MIN};
use horst::{HorstError, C64};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;

fn to_py(e: HorstError) -> PyErr {
    match e {
        HorstError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Visco-acoustic VTI model on a regular grid; arrays are flat, x slowest.
#[pyclass(name = "Model")]
#[derive(Clone)]
struct PyModel {
    inner: VtiModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn homogeneous(dims: [usize; 3], h: f64, v0: f64, rho: f64) -> PyResult<Self> {
        let grid = Grid::cubic(dims, h).map_err(to_py)?;
        Ok(PyModel {
            inner: VtiModel::homogeneous(grid, v0, rho).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: read_model(&path).map_err(to_py)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_model(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.grid.dims
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.inner.grid.spacing
    }

    #[getter]
    fn v0(&self) -> Vec<f64> {
        self.inner.v0.clone()
    }

    #[setter]
    fn set_v0(&mut self, v: Vec<f64>) -> PyResult<()> {
        if v.len() != self.inner.len() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.inner.len(), v.len())));
        }
        let old = std::mem::replace(&mut self.inner.v0, v);
        if let Err(e) = self.inner.validate() {
            self.inner.v0 = old;
            return Err(to_py(e));
        }
        Ok(())
    }

    #[getter]
    fn rho(&self) -> Vec<f64> {
        self.inner.rho.clone()
    }

    #[getter]
    fn epsilon(&self) -> Vec<f64> {
        self.inner.epsilon.clone()
    }

    #[getter]
    fn delta(&self) -> Vec<f64> {
        self.inner.delta.clone()
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q.clone()
    }

    fn set_water_layer(&mut self, cells: usize) {
        self.inner.set_water_layer(cells);
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(dims={:?}, spacing={:?}, v0=[{}, {}])",
            self.inner.grid.dims,
            self.inner.grid.spacing,
            self.inner.v_min(),
            self.inner.v_max()
        )
    }
}

/// Largest grid interval keeping `ppw` points per minimum wavelength.
#[pyfunction]
#[pyo3(signature = (freq, v_min, ppw = 4.0, ppw_min = DEFAULT_PPW_MIN))]
fn grid_interval(freq: f64, v_min: f64, ppw: f64, ppw_min: f64) -> PyResult<f64> {
    grid_interval_for_frequency(freq, v_min, ppw, ppw_min).map_err(to_py)
}

/// Relative phase-velocity error of the tabulated 27-point stencil, or of
/// the 7-point baseline, at `g` points per wavelength.
#[pyfunction]
#[pyo3(signature = (g, theta, phi, seven_point = false))]
fn phase_velocity_error(g: f64, theta: f64, phi: f64, seven_point: bool) -> f64 {
    let w = if seven_point {
        StencilWeights::SEVEN_POINT
    } else {
        StencilWeightTable::default_table().lookup(g)
    };
    dispersion_error(&w, g, direction(theta, phi))
}

/// Monochromatic receiver data for unit sources, one row per source.
#[pyfunction]
#[pyo3(signature = (model, sources, receivers, freq, free_surface = true, pml_width = 10))]
fn simulate(
    py: Python<'_>,
    model: &PyModel,
    sources: Vec<[f64; 3]>,
    receivers: Vec<[f64; 3]>,
    freq: f64,
    free_surface: bool,
    pml_width: usize,
) -> PyResult<Vec<Vec<C64>>> {
    let mut setup = ForwardSetup::default();
    setup.assemble.pml.width = pml_width;
    setup.assemble.pml.six_faces = !free_surface;
    let acq = Acquisition {
        sources,
        receivers,
        reciprocal: false,
    };
    let sig = vec![C64::new(1.0, 0.0); acq.sources.len()];
    let m = model.inner.clone();
    let g = py
        .allow_threads(|| simulate_gather(&m, &acq, freq, &sig, &setup, StencilWeightTable::default_table()))
        .map_err(to_py)?;
    Ok((0..g.n_src).map(|s| g.trace(s).to_vec()).collect())
}

/// Runs the command-line interface and returns its exit code.
#[pyfunction]
fn main(py: Python<'_>, args: Vec<String>) -> i32 {
    let mut argv = vec!["horst".to_string()];
    argv.extend(args);
    py.allow_threads(|| horst::cli::main_with_args(argv))
}

#[pymodule]
#[pyo3(name = "horst")]
fn horst_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(grid_interval, m)?)?;
    m.add_function(wrap_pyfunction!(phase_velocity_error, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
