//! Discretization of the VTI wave equation on a regular grid.

mod assemble;
mod hicks;
mod pml;
mod stencil;

pub use assemble::{
    assemble_operator, assemble_with_weights, frequency_hz, AssembleOptions, CellWeights, ImpedanceMatrix,
    OperatorParts,
};
pub use hicks::{build_rhs, hicks_coefficients, sample_receivers, CouplingStencil, HICKS_KAISER_B, HICKS_RADIUS};
pub use pml::{PmlConfig, Stretching, MIN_PML_WIDTH};
pub use stencil::{
    direction, dispersion_error, max_dispersion_error, octant_directions, optimize_stencil_weights, FitReport,
    StencilWeightTable, StencilWeights, DEFAULT_G_SAMPLES, G_MAX, G_MIN,
};
