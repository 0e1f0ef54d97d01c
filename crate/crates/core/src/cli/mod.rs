//! The `semcom-alloc` command line: configuration loading, model-table
//! persistence, subcommand dispatch and CSV output.

pub mod config;
pub mod files;
mod selfcheck;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::ber;
use crate::distortion;
use crate::error::{Error, Result};
use crate::models::SourceModel;
use crate::optimizer::{select_model_with, ScaOptions};
use crate::par::Exec;
use crate::simulator::{self, FlipMode, SimConfig};

pub use config::{ExperimentConfig, Sweep, SweepAxis, OUTPUT_DIR_ENV};
pub use files::{load_model_table, save_model_table, AllocationFile};

#[derive(Debug, Parser)]
#[command(
    name = "semcom-alloc",
    version,
    about = "Source-model selection and rate/power allocation over parallel Gaussian channels"
)]
pub struct Cli {
    /// Override the RNG seed from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run every loop on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit both distortion curves of one codec from a CSV of measurements.
    FitDistortion(FitDistortionArgs),
    /// Fit the practical-coding BER coefficients from a CSV of BER curves.
    FitBer(FitBerArgs),
    /// Select a model and allocate power and rates for one link.
    Optimize(ConfigArgs),
    /// Run the configured sweep and write a results CSV.
    Sweep(SweepArgs),
    /// Monte Carlo check of a saved allocation.
    Simulate(SimulateArgs),
    /// Run a quick invariant suite and report pass/fail.
    Selfcheck,
}

#[derive(Debug, Args)]
pub struct FitDistortionArgs {
    /// CSV with columns log10_ber, log10_d_obs, d_sem.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub model_id: String,
    /// Bits per source sample.
    #[arg(long)]
    pub rate_rs: f64,
    #[arg(long, default_value_t = 0.0)]
    pub bpp: f64,
    #[arg(long, default_value_t = 5)]
    pub min_points: usize,
    /// Insert the fitted entry into this model table (created if missing).
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitBerArgs {
    /// CSV with columns rate, log10_ber and snr or snr_db.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub mod_order: u32,
    #[arg(long)]
    pub blocklength: u32,
    /// Lower end of the log10 BER fitting region.
    #[arg(long, default_value_t = ber::DEFAULT_FIT_REGION.0, allow_negative_numbers = true)]
    pub region_lo: f64,
    #[arg(long, default_value_t = ber::DEFAULT_FIT_REGION.1, allow_negative_numbers = true)]
    pub region_hi: f64,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output file; defaults to a fixed name inside the output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub base: ConfigArgs,
    /// Skip the Monte Carlo check even if the configuration asks for it.
    #[arg(long)]
    pub no_sim: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Allocation file written by `optimize`.
    #[arg(long, short)]
    pub allocation: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    /// Flip source bits independently at the predicted BER instead of per block.
    #[arg(long)]
    pub stream: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Single-line, machine-parseable rendering of an error for stderr.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error: kind={} msg=\"{msg}\"", e.kind())
}

fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn output_path(out: &Option<PathBuf>, dir: &Path, name: &str) -> Result<PathBuf> {
    if let Some(p) = out {
        return Ok(p.clone());
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

/// Execute one parsed command line. `Ok(false)` means the command ran but
/// reported failures (only `selfcheck` does this).
pub fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let opts = ScaOptions::default();
    match cli.command {
        Command::FitDistortion(a) => {
            let (obs, sem) = files::load_distortion_samples(&a.samples)?;
            let fo = distortion::fit_logistic(&obs, a.min_points)?;
            let fs = distortion::fit_logistic(&sem, a.min_points)?;
            let model =
                SourceModel { model_id: a.model_id, rate_rs: a.rate_rs, bpp: a.bpp, obs: fo.params, sem: fs.params };
            model.validate()?;
            println!("# obs rmse {:.3e}, sem rmse {:.3e}", fo.rmse, fs.rmse);
            match a.table {
                Some(path) => {
                    let mut table = if path.exists() {
                        load_model_table(&path)?
                    } else {
                        crate::ModelTable::new(vec![model.clone()])?
                    };
                    if table.get(&model.model_id).is_none() {
                        table.insert(model)?;
                    }
                    save_model_table(&path, &table)?;
                    println!("# wrote {} ({} entries)", path.display(), table.len());
                }
                None => {
                    let single = crate::ModelTable::new(vec![model])?;
                    print!("{}", files::model_table_to_toml(&single)?);
                }
            }
            Ok(true)
        }
        Command::FitBer(a) => {
            let samples = files::load_ber_samples(&a.samples)?;
            let fit = ber::fit_ber_samples(&samples, a.mod_order, (a.region_lo, a.region_hi))?;
            for f in &fit.per_rate_fits {
                println!("# rate {}: lambda {:.6}, mu {:.6}, rmse {:.3e}", f.rate, f.lambda, f.mu, f.rmse);
            }
            let c = fit.coeffs;
            println!("[scheme]");
            println!("kind = \"practical\"");
            println!("blocklength = {}", a.blocklength);
            println!("mod_order = {}", fit.mod_order);
            println!("lam1 = {}\nlam2 = {}\nmu1 = {}\nmu2 = {}", c.lam1, c.lam2, c.mu1, c.mu2);
            Ok(true)
        }
        Command::Optimize(a) => {
            let cfg = load_config(&a.config, cli.seed)?;
            let table = load_model_table(&cfg.table_path)?;
            let sel = select_model_with(&cfg.link, &table, exec, &opts)?;
            let rep = &sel.best;
            let alloc = &rep.allocation;
            let path = output_path(&a.out, &cfg.output_dir, "allocation.toml")?;
            files::save_allocation(
                &path,
                &AllocationFile {
                    iterations: rep.iterations,
                    status: rep.status.as_str().into(),
                    link: cfg.link.clone(),
                    allocation: alloc.clone(),
                },
            )?;
            println!("model      {} (R_s = {})", alloc.model.model_id, alloc.model.rate_rs);
            println!("status     {} after {} iterations", rep.status.as_str(), rep.iterations);
            println!("d_ave      {:.6}", alloc.d_ave);
            println!("abr        {:.6}", alloc.abr);
            for k in 0..alloc.powers.len() {
                println!(
                    "channel {:<3} P = {:<12.6} R = {:<10.6} log10 BER = {:.3}",
                    k + 1,
                    alloc.powers[k],
                    alloc.rates[k],
                    alloc.log10_ber[k]
                );
            }
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Sweep(a) => {
            let cfg = load_config(&a.base.config, cli.seed)?;
            let table = load_model_table(&cfg.table_path)?;
            let grid = cfg.grid();
            let sim = if a.no_sim { None } else { cfg.sim };
            let points = simulator::sweep(&grid, &table, sim.as_ref(), exec, &opts)?;
            let (column, values) = match &cfg.sweep {
                Some(s) => (s.column(), s.values.clone()),
                None => ("p_max".to_string(), vec![cfg.link.p_max]),
            };
            let path = output_path(&a.base.out, &cfg.output_dir, "sweep.csv")?;
            files::write_sweep_csv(&path, &column, &values, cfg.link.num_channels(), &points)?;
            let infeasible = points.iter().filter(|p| p.outcome.is_err()).count();
            println!("{} points ({} infeasible); wrote {}", points.len(), infeasible, path.display());
            Ok(true)
        }
        Command::Simulate(a) => {
            let file = files::load_allocation(&a.allocation)?;
            let sim = SimConfig {
                n_samples: a.samples,
                seed: cli.seed.unwrap_or(0),
                mode: if a.stream { FlipMode::Stream } else { FlipMode::Block },
            };
            let report = simulator::simulate(&file.allocation, &file.link, &sim, exec)?;
            let path = output_path(&a.out, &default_output_dir(), "simulate.csv")?;
            files::write_simulate_csv(&path, &report)?;
            println!(
                "d_ave predicted {:.6}, empirical {:.6} +- {:.2e}; wrote {}",
                report.predicted_d_ave,
                report.empirical_d_ave,
                report.std_error,
                path.display()
            );
            Ok(true)
        }
        Command::Selfcheck => {
            let results = selfcheck::run_all();
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            println!("{} of {} checks passed", results.len() - failed, results.len());
            Ok(failed == 0)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    Ok(cfg)
}
