//! Frequency-domain waveform inversion of the vertical velocity.

pub mod dataset;
pub mod inversion;
pub mod optimize;
pub mod problem;
pub mod tv;

pub use dataset::{Acquisition, FreqDataset, FreqGather};
pub use inversion::{
    invert_frequency, read_history_csv, run_continuation, write_history_csv, HistoryRow, InversionOptions, InversionState,
    StageSummary,
};
pub use optimize::{wolfe_line_search, Lbfgs, LineSearchOutcome, WolfeOptions};
pub use problem::{estimate_signature, misfit, simulate_gather, Evaluation, ForwardSetup, StageProblem};
pub use tv::{total_variation, tv_denoise, tv_denoise_model, tv_objective};
