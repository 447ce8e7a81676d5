use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use iontherm_core::experiments::{
    default_gamma_grid, default_map_grid, run_background_sweep, run_dynamics_scenario,
    run_evolution, run_gamma_map, run_gamma_sweep, run_steady, DynamicsPreset, SweepParameter,
};
use iontherm_core::io::output::{
    write_json, write_map_csv, write_positions_csv, write_profile_csv, write_series_csv,
    write_sweep_csv,
};
use iontherm_core::io::{load_config, to_physical_units, OutputFormat, RunConfig, TimeGrid};
use iontherm_core::spectral::log_space;
use iontherm_core::validation::{run_validation, ValidationOptions};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "iontherm", version, about = "Temperature dynamics of bath-driven ion chains")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Seed for stochastic checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and trajectories.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress diagnostics on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Uniform,
    Harmonic,
    HarmonicBg,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    #[arg(long)]
    min: Option<f64>,
    #[arg(long)]
    max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium positions and local transverse frequencies.
    Positions,
    /// Steady-state temperature profile.
    Steady,
    /// Temperature series on the configured time grid.
    Evolve {
        /// Overrides `times.t_max` (log grid with 200 points if no grid is configured).
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Steady profiles over a common driving rate of both baths.
    SweepGamma(GridArgs),
    /// Middle-ion temperature over the (gamma1, gamma2) plane.
    MapGamma {
        #[arg(long)]
        points: Option<usize>,
    },
    /// Steady profiles over the background coupling rate.
    SweepBackground(GridArgs),
    /// Relaxation of a 20-ion chain from a uniform initial temperature.
    Dynamics {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long, default_value_t = 20)]
        n: usize,
    },
    /// Cross-check the solver against independent oracles.
    Validate {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 2000)]
        trajectories: usize,
    },
    /// Conversion to SI units.
    Units {
        /// Ion mass in atomic mass units.
        #[arg(long, default_value_t = 171.0)]
        mass: f64,
        /// Length unit in meters.
        #[arg(long, default_value_t = 10e-6)]
        d0: f64,
        #[arg(long, default_value_t = 10.0)]
        omega_x: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        /// Dimensionless time to convert.
        #[arg(long, default_value_t = 400.0)]
        time: f64,
    },
}

/// Where and how results go.
struct Sink {
    path: Option<PathBuf>,
    format: OutputFormat,
}

impl Sink {
    fn emit(&self, body: impl FnOnce(&mut dyn Write, OutputFormat) -> io::Result<()>) -> anyhow::Result<()> {
        match &self.path {
            Some(path) => iontherm_core::io::output::write_file(path, |w| body(w, self.format))?,
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                body(&mut lock, self.format).context("writing to standard output")?;
                lock.flush()?;
            }
        }
        Ok(())
    }
}

fn config_required(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| iontherm_core::Error::InvalidArgument("this subcommand needs --config <path>".into()))?;
    Ok(load_config(path)?)
}

fn sink(cli: &Cli, config: Option<&RunConfig>) -> Sink {
    let format = match cli.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => config.map(|c| c.output.format).unwrap_or_default(),
    };
    let path = cli
        .output
        .clone()
        .or_else(|| config.and_then(|c| c.output.path.as_ref().map(PathBuf::from)));
    Sink { path, format }
}

fn grid(args: &GridArgs, configured: Option<Vec<f64>>, default: Vec<f64>) -> anyhow::Result<Vec<f64>> {
    if args.min.is_none() && args.max.is_none() && args.points.is_none() {
        return Ok(configured.unwrap_or(default));
    }
    let lo = args.min.unwrap_or(default[0]);
    let hi = args.max.unwrap_or(*default.last().unwrap());
    let points = args.points.unwrap_or(default.len());
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(iontherm_core::Error::InvalidArgument(format!(
            "grid needs 0 < min < max and at least 2 points, got [{lo}, {hi}] x {points}"
        ))
        .into());
    }
    Ok(log_space(lo, hi, points))
}

fn configured_axis(cfg: &RunConfig, p: SweepParameter) -> Option<Vec<f64>> {
    cfg.axis(p).map(|a| a.values.clone())
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Positions => {
            let cfg = config_required(cli)?;
            let (chain, coupling) = cfg.scenario.build()?;
            sink(cli, Some(&cfg)).emit(|w, fmt| match fmt {
                OutputFormat::Csv => write_positions_csv(w, &chain, &coupling),
                OutputFormat::Json => write_json(
                    w,
                    &json!({
                        "positions": chain.positions(),
                        "omega_i": coupling.local_freqs(),
                        "omega_z": chain.omega_z(),
                        "max_gap": chain.max_gap(),
                    }),
                ),
            })?;
        }
        Command::Steady => {
            let cfg = config_required(cli)?;
            let (chain, coupling, profile) = run_steady(&cfg.scenario)?;
            sink(cli, Some(&cfg)).emit(|w, fmt| match fmt {
                OutputFormat::Csv => write_profile_csv(w, &chain, &coupling, &profile),
                OutputFormat::Json => write_json(
                    w,
                    &json!({
                        "positions": chain.positions(),
                        "omega_i": coupling.local_freqs(),
                        "temperatures": profile.temps,
                    }),
                ),
            })?;
        }
        Command::Evolve { t_max } => {
            let cfg = config_required(cli)?;
            let mut grid = cfg.times.unwrap_or(TimeGrid::log(1e3));
            if let Some(t) = t_max {
                if !(*t > grid.t_min) {
                    bail!(iontherm_core::Error::InvalidArgument(format!(
                        "--t-max must exceed the first grid time {}",
                        grid.t_min
                    )));
                }
                grid.t_max = *t;
            }
            let (_, coupling) = cfg.scenario.build()?;
            let series = run_evolution(&cfg.scenario, &coupling, &grid.times())?;
            sink(cli, Some(&cfg)).emit(|w, fmt| match fmt {
                OutputFormat::Csv => write_series_csv(w, &series),
                OutputFormat::Json => write_json(w, &series),
            })?;
        }
        Command::SweepGamma(args) => {
            let cfg = config_required(cli)?;
            let gammas = grid(args, configured_axis(&cfg, SweepParameter::Gamma), default_gamma_grid())?;
            let result = run_gamma_sweep(&cfg.scenario, &gammas)?;
            sink(cli, Some(&cfg)).emit(|w, fmt| match fmt {
                OutputFormat::Csv => write_sweep_csv(w, &result),
                OutputFormat::Json => write_json(w, &result),
            })?;
        }
        Command::MapGamma { points } => {
            let cfg = config_required(cli)?;
            let default = match points {
                Some(p) if *p >= 2 => log_space(1e-3, 1e2, *p),
                Some(p) => bail!(iontherm_core::Error::InvalidArgument(format!("--points must be at least 2, got {p}"))),
                None => default_map_grid(),
            };
            let g1 = configured_axis(&cfg, SweepParameter::Gamma1).unwrap_or_else(|| default.clone());
            let g2 = configured_axis(&cfg, SweepParameter::Gamma2).unwrap_or(default);
            let result = run_gamma_map(&cfg.scenario, &g1, &g2)?;
            sink(cli, Some(&cfg)).emit(|w, fmt| match fmt {
                OutputFormat::Csv => write_map_csv(w, &result),
                OutputFormat::Json => write_json(w, &result),
            })?;
        }
        Command::SweepBackground(args) => {
            let cfg = config_required(cli)?;
            let values = grid(args, configured_axis(&cfg, SweepParameter::GammaBg), log_space(1e-5, 10.0, 41))?;
            let result = run_background_sweep(&cfg.scenario, &values)?;
            sink(cli, Some(&cfg)).emit(|w, fmt| match fmt {
                OutputFormat::Csv => write_sweep_csv(w, &result),
                OutputFormat::Json => write_json(w, &result),
            })?;
        }
        Command::Dynamics { preset, n } => {
            let preset = match preset {
                Preset::Uniform => DynamicsPreset::Uniform,
                Preset::Harmonic => DynamicsPreset::Harmonic,
                Preset::HarmonicBg => DynamicsPreset::HarmonicBg,
            };
            let result = run_dynamics_scenario(preset, *n)?;
            if !cli.quiet {
                let fmt_t = |t: Option<f64>| t.map_or("not reached".to_string(), |t| format!("{t:.4e}"));
                for c in &result.relaxation.t1 {
                    eprintln!(
                        "t1 (ion {} within {} of {}): {}",
                        c.ion_index,
                        result.relaxation.epsilon,
                        c.target,
                        fmt_t(c.time)
                    );
                }
                eprintln!("t2 (all ions within {} of steady state): {}", result.relaxation.epsilon, fmt_t(result.relaxation.t2));
                eprintln!("min Re(λα+λβ) = {:.3e}", result.min_sum_real);
                if let Some(d) = &result.diagnostic {
                    eprintln!("{d}");
                }
                let mid = n.div_ceil(2);
                eprintln!("ion {mid} drift over the final decade: {:.4e}", result.final_decade_drift(mid));
            }
            sink(cli, None).emit(|w, fmt| match fmt {
                OutputFormat::Csv => write_series_csv(w, &result.series),
                OutputFormat::Json => write_json(w, &result),
            })?;
        }
        Command::Validate { instances, trajectories } => {
            let opts = ValidationOptions {
                seed: cli.seed.unwrap_or(42),
                instances: *instances,
                n_traj: *trajectories,
                ..ValidationOptions::default()
            };
            let report = run_validation(&opts)?;
            sink(cli, None).emit(|w, fmt| match fmt {
                OutputFormat::Csv => w.write_all(report.summary().as_bytes()),
                OutputFormat::Json => write_json(w, &report),
            })?;
            if !report.passed {
                if !cli.quiet {
                    eprintln!("validation failed");
                }
                return Ok(ExitCode::from(EXIT_VALIDATION));
            }
        }
        Command::Units { mass, d0, omega_x, gamma, time } => {
            let u = to_physical_units(*mass, *d0)?;
            let table = [
                ("frequency unit [rad/s]", u.frequency_unit_rad_per_s),
                ("frequency unit [Hz]", u.frequency_unit_hz),
                ("time unit [s]", u.time_unit_s),
                ("energy unit [J]", u.energy_unit_joule),
            ];
            sink(cli, None).emit(|w, fmt| match fmt {
                OutputFormat::Json => write_json(
                    w,
                    &json!({
                        "units": u,
                        "omega_x": { "value": omega_x, "hz": u.frequency_hz(*omega_x) },
                        "gamma": { "value": gamma, "hz": u.frequency_hz(*gamma) },
                        "time": {
                            "value": time,
                            "seconds_angular": u.time_s_angular(*time),
                            "seconds_ordinary": u.time_s_ordinary(*time),
                        },
                    }),
                ),
                OutputFormat::Csv => {
                    writeln!(w, "mass {} amu, d0 {} m", u.mass_amu, u.d0_meters)?;
                    for (name, v) in table {
                        writeln!(w, "{name:<44} {v:.6e}")?;
                    }
                    writeln!(w, "{:<44} {:.4} MHz", format!("omega_x = {omega_x}"), u.frequency_hz(*omega_x) * 1e-6)?;
                    writeln!(w, "{:<44} {:.4} kHz", format!("gamma = {gamma}"), u.frequency_hz(*gamma) * 1e-3)?;
                    writeln!(
                        w,
                        "{:<44} {:.4} ms",
                        format!("t = {time} (frequencies read as rad/s)"),
                        u.time_s_angular(*time) * 1e3
                    )?;
                    writeln!(
                        w,
                        "{:<44} {:.4} ms",
                        format!("t = {time} (frequencies read as Hz)"),
                        u.time_s_ordinary(*time) * 1e3
                    )
                }
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<iontherm_core::Error>()) {
        Some(e) if e.is_config_error() => EXIT_CONFIG,
        Some(_) => EXIT_NUMERICAL,
        None => EXIT_CONFIG,
    }
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(anyhow!(iontherm_core::Error::InvalidArgument("--threads must be at least 1".into())));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    iontherm_core::use_sequential_linear_algebra();

    let outcome = init_threads(cli.threads).and_then(|()| run(&cli));
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
