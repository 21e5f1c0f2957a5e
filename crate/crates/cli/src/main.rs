use std::error::Error;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use miso_locmap::estimator::{estimate, EstimatorOptions, GridSpec, Method};
use miso_locmap::fim::bounds_for_config;
use miso_locmap::harness::{apply_sweep, parse_sweep, run_sweep, trial_rng, SweepSpec, SweepVar};
use miso_locmap::io::{self as fio, EstimateFile, ObservationFile};
use miso_locmap::locmap::locate;
use miso_locmap::scenario::{realize, ScenarioConfig};
use miso_locmap::signal::{build_beamformer, synthesize};

type CliResult<T> = Result<T, Box<dyn Error>>;

/// Single-snapshot localization and mapping for a mmWave MISO downlink.
#[derive(Parser)]
#[command(name = "miso-locmap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one noisy observation set. Output is JSON, or CSV (n,g,re,im)
    /// when `--out` ends in `.csv`.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Seed for path phases and noise (defaults to the config's rng_seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cramér-Rao bounds of every channel parameter, the mobile position and
    /// each scatterer, as CSV.
    Crlb {
        #[command(flatten)]
        config: ConfigArg,
        /// `var=start:step:stop`, `var=v1,v2,...`, or just `mu`, `snr`, `lmr`
        /// for a default range. A `mu` sweep covers 0 to 3 scatterers.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate angles, delays and gains from an observation file.
    Estimate {
        /// Observation file from `simulate` (JSON, or CSV together with `--config`).
        #[arg(long = "obs")]
        observations: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "joint")]
        method: Method,
        /// Initialization grid: `NxM` (angle x range nodes), `coarse` or `fine`.
        #[arg(long)]
        grid: Option<String>,
        /// Number of paths to fit, LOS included (defaults to 1 + scatterers in the config).
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn an estimate file into a mobile position and scatterer map in
    /// world coordinates. JSON, or CSV when `--out` ends in `.csv`.
    Locmap {
        /// Output of `estimate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo RMSE sweep against the bounds, as CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// `var=start:step:stop` or `var=v1,v2,...`; var is snr, lmr, mu or n_paths.
        #[arg(long, default_value = "snr=-10:5:20")]
        sweep: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated methods, `all`, or `bounds` for bounds only.
        #[arg(long, default_value = "joint")]
        method: String,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Scenario JSON. Missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> CliResult<ScenarioConfig> {
        let cfg: ScenarioConfig = match &self.config {
            Some(p) => fio::read_json(p).map_err(|e| format!("{}: {e}", p.display()))?,
            None => ScenarioConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn grid_or_default(grid: Option<&str>) -> CliResult<GridSpec> {
    Ok(match grid {
        Some(g) => g.parse()?,
        None => GridSpec::default(),
    })
}

fn parse_methods(s: &str) -> CliResult<Vec<Method>> {
    match s {
        "all" => Ok(Method::ALL.to_vec()),
        "bounds" | "none" => Ok(vec![]),
        _ => Ok(s.split(',').map(|m| m.trim().parse()).collect::<Result<_, _>>()?),
    }
}

fn crlb_sweep(arg: &str) -> CliResult<(SweepVar, Vec<f64>)> {
    if arg.contains('=') {
        return Ok(parse_sweep(arg)?);
    }
    let default = match arg.parse::<SweepVar>()? {
        SweepVar::Mu => "mu=0.1:0.1:2",
        SweepVar::SnrDb => "snr=-10:5:20",
        SweepVar::LmrDb => "lmr=-10:2.5:10",
        SweepVar::NPaths => "n_paths=0:1:3",
    };
    Ok(parse_sweep(default)?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = config.load()?;
            let tx = build_beamformer(&cfg)?;
            let mut rng = trial_rng(seed.unwrap_or(cfg.rng_seed), 0, 0);
            let real = realize(&cfg, &mut rng)?;
            let obs = synthesize(&real.paths, &tx, real.sigma2, &mut rng)?;
            match out.as_deref() {
                Some(p) if fio::is_csv(p) => fio::write_samples_csv(&fio::samples_of(&obs.y), sink(Some(p))?)?,
                _ => write_json(&ObservationFile::new(cfg, &obs, Some(real.paths)), out.as_deref())?,
            }
        }
        Command::Crlb { config, sweep, out } => {
            let cfg = config.load()?;
            let mut rows = Vec::new();
            match sweep {
                None => rows.extend(fio::bound_rows("none", 0.0, &bounds_for_config(&cfg)?)),
                Some(arg) => {
                    let (var, values) = crlb_sweep(&arg)?;
                    let bases: Vec<ScenarioConfig> = if var == SweepVar::Mu {
                        (0..=3)
                            .map(|k| apply_sweep(&cfg, SweepVar::NPaths, k as f64))
                            .collect::<Result<_, _>>()?
                    } else {
                        vec![cfg.clone()]
                    };
                    for base in &bases {
                        for &v in &values {
                            let point = apply_sweep(base, var, v)?;
                            match bounds_for_config(&point) {
                                Ok(b) => rows.extend(fio::bound_rows(&var.to_string(), v, &b)),
                                Err(e) => eprintln!("skipping {var}={v}: {e}"),
                            }
                        }
                    }
                }
            }
            fio::write_csv_rows(&rows, sink(out.as_deref())?)?;
        }
        Command::Estimate { observations, config, method, grid, paths, out } => {
            let (cfg, obs) = if fio::is_csv(&observations) {
                if config.config.is_none() {
                    return Err("a CSV observation file needs --config".into());
                }
                let cfg = config.load()?;
                let samples = fio::read_samples_csv(File::open(&observations)?)?;
                let y = fio::matrix_from_samples(&samples, cfg.n_subcarriers, cfg.n_transmissions)?;
                (cfg, y)
            } else {
                let file: ObservationFile = fio::read_json(&observations)?;
                let cfg = if config.config.is_some() { config.load()? } else { file.config.clone() };
                let y = fio::matrix_from_samples(&file.samples, cfg.n_subcarriers, cfg.n_transmissions)?;
                (cfg, y)
            };
            let tx = build_beamformer(&cfg)?;
            let opts = EstimatorOptions { grid: grid_or_default(grid.as_deref())?, ..Default::default() };
            let n_paths = paths.unwrap_or(cfg.scatterers.len() + 1);
            if n_paths == 0 {
                return Err("--paths must be at least 1".into());
            }
            let est = estimate(method, &obs, &tx, n_paths, &opts)?;
            write_json(&EstimateFile { config: cfg, estimate: est }, out.as_deref())?;
        }
        Command::Locmap { input, out } => {
            let file: EstimateFile = fio::read_json(&input)?;
            let loc = locate(&file.estimate.theta, file.config.bs())?;
            if loc.los_tie {
                eprintln!("warning: several paths share the shortest delay; picked the first");
            }
            match out.as_deref() {
                Some(p) if fio::is_csv(p) => fio::write_csv_rows(&fio::location_rows(&loc), sink(Some(p))?)?,
                _ => write_json(&loc, out.as_deref())?,
            }
        }
        Command::Sweep { config, sweep, trials, seed, method, grid, out } => {
            let cfg = config.load()?;
            let (var, values) = parse_sweep(&sweep)?;
            let mut spec = SweepSpec::new(cfg, var, values);
            spec.trials = trials;
            spec.seed = seed;
            spec.methods = parse_methods(&method)?;
            spec.estimator.grid = grid_or_default(grid.as_deref())?;
            let result = run_sweep(&spec)?;
            result.write_csv(sink(out.as_deref())?)?;
            eprintln!("{} rows in {:.1} s", result.rows.len(), result.wall_time_s.iter().sum::<f64>());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
