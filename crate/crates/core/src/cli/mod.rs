//! Orchestration behind the `horst` binary: configuration, survey synthesis,
//! benchmarks, section export and the oracle suite.

pub mod app;
pub mod bench;
pub mod config;
pub mod slices;
pub mod survey;
pub mod validate;

pub use app::{main_with_args, run, Cli, Command};
pub use bench::{bench_scaling, fit_exponent, helmholtz_cube, BenchReport, BenchRow, ExponentFit};
pub use config::RunConfig;
pub use slices::{export_slices, velocity_gradient_magnitude};
pub use survey::{synthesize_survey, Anomaly, BaseModelSpec, Survey, SurveySpec};
