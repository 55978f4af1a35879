//! Command-line front end of the `horst` binary.

use super::bench::bench_scaling;
use super::config::RunConfig;
use super::slices::export_slices;
use super::survey::synthesize_survey;
use super::validate::run_validation;
use crate::discretize::{octant_directions, optimize_stencil_weights, StencilWeightTable};
use crate::fwi::dataset::{read_gathers, write_gathers};
use crate::fwi::{
    run_continuation, simulate_gather, tv_denoise_model, write_history_csv, Acquisition, FreqDataset, HistoryRow,
};
use crate::model::{read_model, resample_model, write_model, VtiModel};
use crate::solver::append_stats_csv;
use crate::{HorstError, Result, C64};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "horst", version, about = "Frequency-domain waveform inversion with a block low-rank multifrontal solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set solver.mode=BLR`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads; falls back to HORST_THREADS, then all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Deterministic schedules and timing-free outputs.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

/// Overrides given after the subcommand; applied after those given before.
#[derive(Debug, Default, Args)]
pub struct LocalArgs {
    /// Override a configuration key, e.g. `--set solver.mode=BLR`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the 27-point stencil weight table.
    Weights(LocalArgs),
    /// Model observed data for every plan frequency.
    Forward(LocalArgs),
    /// Run the frequency-continuation inversion.
    Invert(LocalArgs),
    /// Factorization scaling benchmark.
    Bench(LocalArgs),
    /// Synthesise an inverse-crime survey.
    Survey(LocalArgs),
    /// Export a model section as image and CSV.
    Slice(LocalArgs),
    /// Run the analytic-oracle suite.
    Validate(LocalArgs),
}

impl Command {
    fn local(&self) -> &LocalArgs {
        match self {
            Command::Weights(a)
            | Command::Forward(a)
            | Command::Invert(a)
            | Command::Bench(a)
            | Command::Survey(a)
            | Command::Slice(a)
            | Command::Validate(a) => a,
        }
    }
}

/// Configuration from the command line, the optional file and the
/// environment.
pub fn load_config(common: &CommonArgs, local: &LocalArgs) -> Result<RunConfig> {
    let mut overrides = common.overrides.clone();
    overrides.extend(local.overrides.iter().cloned());
    if common.deterministic {
        overrides.push("solver.deterministic=true".into());
    }
    let threads = match common.threads {
        Some(t) => Some(t),
        None => match std::env::var("HORST_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| HorstError::config("threads", format!("HORST_THREADS={v} is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        overrides.push(format!("threads={t}"));
    }
    match &common.config {
        Some(p) => RunConfig::load(p, &overrides),
        None => RunConfig::from_value(serde_json::json!({}), &overrides),
    }
}

fn load_table(cfg: &RunConfig) -> Result<std::borrow::Cow<'static, StencilWeightTable>> {
    Ok(match &cfg.paths.weights {
        Some(p) => std::borrow::Cow::Owned(StencilWeightTable::read_csv(p)?),
        None => std::borrow::Cow::Borrowed(StencilWeightTable::default_table()),
    })
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.paths.output_dir)?;
    Ok(cfg.paths.output_dir.clone())
}

fn required(p: &Option<PathBuf>) -> &Path {
    p.as_deref().expect("checked by require_paths")
}

fn same_spacing(model: &VtiModel, h: f64) -> bool {
    model.grid.spacing.iter().all(|&s| (s - h).abs() <= 1e-9 * h)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common, cli.command.local())?;
    if let Some(t) = cfg.threads {
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let deterministic = cfg.solver.deterministic;
    match cli.command {
        Command::Weights(_) => {
            let dirs = octant_directions(cfg.weights.n_theta, cfg.weights.n_phi);
            let (table, reports) = optimize_stencil_weights(&cfg.weights.g_samples, &dirs)?;
            let path = out_dir(&cfg)?.join("weights.csv");
            table.write_csv(&path)?;
            for r in reports {
                println!("G={:6.2}  max error {:.3e}  7-point {:.3e}", r.g, r.max_error, r.baseline_error);
            }
            println!("wrote {}", path.display());
        }
        Command::Survey(_) => {
            let base = match &cfg.paths.model {
                Some(p) => {
                    cfg.require_paths(&["paths.model"])?;
                    read_model(p)?
                }
                None => cfg.survey.base.build()?,
            };
            let sv = synthesize_survey(&cfg.survey, &base)?;
            let dir = out_dir(&cfg)?;
            write_model(&dir.join("true_model.fdm"), &sv.true_model)?;
            write_model(&dir.join("start_model.fdm"), &sv.start_model)?;
            sv.acquisition.write_json(&dir.join("acquisition.json"))?;
            println!(
                "{} nodes (sources), {} shots (receivers), written to {}",
                sv.acquisition.sources.len(),
                sv.acquisition.receivers.len(),
                dir.display()
            );
        }
        Command::Forward(_) => {
            let key = if cfg.paths.true_model.is_some() { "paths.true_model" } else { "paths.model" };
            cfg.require_paths(&[key, "paths.acquisition"])?;
            let model = read_model(required(if key == "paths.model" { &cfg.paths.model } else { &cfg.paths.true_model }))?;
            let acq = Acquisition::read_json(required(&cfg.paths.acquisition))?;
            let table = load_table(&cfg)?;
            let setup = cfg.forward_setup();
            let plan = cfg.plan.build(model.v_min())?;
            let sig = vec![C64::new(1.0, 0.0); acq.sources.len()];
            let mut gathers = Vec::new();
            for st in &plan.stages {
                let m = if same_spacing(&model, st.h) { model.clone() } else { resample_model(&model, st.h)? };
                log::info!("modelling {} Hz on h={} m ({} nodes)", st.freq, st.h, m.len());
                gathers.push(simulate_gather(&m, &acq, st.freq, &sig, &setup, &table)?);
            }
            let path = out_dir(&cfg)?.join("dataset.fdg");
            write_gathers(&path, &gathers)?;
            println!("wrote {} frequencies to {}", gathers.len(), path.display());
        }
        Command::Invert(_) => {
            cfg.require_paths(&["paths.model", "paths.acquisition", "paths.dataset"])?;
            let m0 = read_model(required(&cfg.paths.model))?;
            let dataset = FreqDataset {
                acquisition: Acquisition::read_json(required(&cfg.paths.acquisition))?,
                gathers: read_gathers(required(&cfg.paths.dataset))?,
            };
            let table = load_table(&cfg)?;
            let plan = cfg.plan.build(m0.v_min())?;
            let dir = out_dir(&cfg)?;
            let opts = cfg.inversion_options();
            let (mut model, mut history) =
                run_continuation(&plan, &dataset, &m0, &cfg.forward_setup(), &table, &opts, |state, summary| {
                    let path = dir.join(format!("model_c{}_s{}.fdm", state.cycle, state.stage));
                    write_model(&path, &state.model)?;
                    println!(
                        "cycle {} stage {} ({} Hz): J {:.4e} -> {:.4e} in {} iterations",
                        state.cycle, state.stage, summary.freq, summary.initial_misfit, summary.final_misfit, summary.iterations
                    );
                    Ok(())
                })?;
            if deterministic {
                history.iter_mut().for_each(|r: &mut HistoryRow| r.wall_s = 0.0);
            }
            write_history_csv(&dir.join("history.csv"), &history)?;
            write_model(&dir.join("model_final.fdm"), &model)?;
            if cfg.inversion.tv_lambda > 0.0 {
                let rep = tv_denoise_model(&mut model, cfg.inversion.tv_lambda);
                log::info!("TV denoising: {} iterations, gap {:.3e}", rep.iterations, rep.gap);
                write_model(&dir.join("model_final_tv.fdm"), &model)?;
            }
            println!("wrote results to {}", dir.display());
        }
        Command::Bench(_) => {
            let dir = out_dir(&cfg)?;
            let csv = dir.join("bench_stats.csv");
            if csv.exists() {
                std::fs::remove_file(&csv)?;
            }
            let report = bench_scaling(&cfg.bench, deterministic, |row| {
                println!(
                    "n={:3} {:7} eps={:.0e}: factors {} B, flops {}, residual {:.2e}",
                    row.n, row.record.mode, row.record.eps_blr, row.record.mem_factors_bytes, row.record.flops_facto, row.residual
                );
            })?;
            let mut records: Vec<_> = report.rows.iter().map(|r| r.record.clone()).collect();
            if deterministic {
                for r in records.iter_mut() {
                    r.t_analysis_s = 0.0;
                    r.t_facto_s = 0.0;
                    r.t_solve_s = 0.0;
                }
            }
            append_stats_csv(&csv, &records)?;
            let fits = serde_json::to_string_pretty(&report.fits).map_err(|e| HorstError::invalid(e.to_string()))?;
            std::fs::write(dir.join("exponents.json"), &fits)?;
            for f in &report.fits {
                println!(
                    "{} eps={:.0e}: flop exponent {:?}, byte exponent {:?}",
                    f.mode, f.eps_blr, f.flops_exponent, f.bytes_exponent
                );
            }
            for (n, mode, why) in &report.skipped {
                println!("skipped n={n} {mode}: {why}");
            }
        }
        Command::Slice(_) => {
            cfg.require_paths(&["paths.model"])?;
            let model = read_model(required(&cfg.paths.model))?;
            let s = &cfg.slice;
            let (ppm, csv) = export_slices(&model, s.axis, s.index, s.overlay, &out_dir(&cfg)?, &s.name)?;
            println!("wrote {} and {}", ppm.display(), csv.display());
        }
        Command::Validate(_) => {
            let table = load_table(&cfg)?;
            let checks = run_validation(&table)?;
            let mut failed = 0;
            for c in &checks {
                println!("[{}] {}: {:.3e} (limit {:.3e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
                failed += usize::from(!c.pass);
            }
            if failed > 0 {
                return Err(HorstError::Numeric(format!("{failed} validation checks failed")));
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
