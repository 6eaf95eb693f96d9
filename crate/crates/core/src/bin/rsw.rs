//! Batch command-line driver: single runs, convergence sweeps, refinement
//! ladders and the case catalog listing.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
//! failures (positivity loss, solver non-convergence, energy increase).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rsw_core::cases;
use rsw_core::error::Error;
use rsw_core::run::{
    execute_kconv, execute_run, execute_sweep, format_g17, ladder_csv_string, sweep_csv_string,
    RunConfig,
};

#[derive(Parser)]
#[command(name = "rsw", version, about = "Rotating shallow water finite volume solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Case name (see `list-cases`).
    #[arg(long)]
    case: Option<String>,
    /// Configuration file (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cells in x (cell count for quasi-1D cases).
    #[arg(long)]
    nx: Option<usize>,
    /// Cells in y (ignored by quasi-1D cases).
    #[arg(long)]
    ny: Option<usize>,
    /// Final time.
    #[arg(long = "tfinal")]
    t_final: Option<f64>,
    /// Output directory (created if missing; omit to skip file output).
    #[arg(long)]
    out: Option<String>,
    /// Gravitational acceleration override.
    #[arg(long)]
    g: Option<f64>,
    /// Coriolis parameter override.
    #[arg(long)]
    omega: Option<f64>,
    /// Stabilisation strength override.
    #[arg(long)]
    eta: Option<f64>,
    /// Rotation-bound safety factor override, in (0, 1).
    #[arg(long)]
    zeta: Option<f64>,
    /// Momentum-diffusion strength override.
    #[arg(long)]
    alpha: Option<f64>,
    /// Time-step safety multiplier override, in (0, 1].
    #[arg(long)]
    cfl: Option<f64>,
}

impl CommonOpts {
    fn to_config(&self) -> Result<RunConfig, Error> {
        let flags = RunConfig {
            case: self.case.clone(),
            nx: self.nx,
            ny: self.ny,
            t_final: self.t_final,
            g: self.g,
            omega: self.omega,
            eta: self.eta,
            zeta: self.zeta,
            alpha: self.alpha,
            cfl_safety: self.cfl,
            out_dir: self.out.clone(),
            ..Default::default()
        };
        Ok(match &self.config {
            Some(path) => flags.merged_over(RunConfig::from_file(path)?),
            None => flags,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and write ledger, snapshots and manifest.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// Write a snapshot every N accepted steps.
        #[arg(long = "snap-every")]
        snap_every: Option<usize>,
        /// Comma-separated snapshot times within [0, t_final].
        #[arg(long = "snap-times", value_delimiter = ',')]
        snap_times: Option<Vec<f64>>,
        /// Output formats (csv, vtk).
        #[arg(long, value_delimiter = ',')]
        formats: Option<Vec<String>>,
    },
    /// Run a resolution sweep and tabulate errors/orders against a finer
    /// self-generated reference run.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Ascending power-of-two resolutions, e.g. 16,32,64,128.
        #[arg(long, value_delimiter = ',', required = true)]
        resolutions: Vec<usize>,
        /// Reference resolution (multiple of the finest listed one).
        #[arg(long = "ref")]
        reference: usize,
    },
    /// Run a refinement ladder and compute the statistical error table.
    Kconv {
        #[command(flatten)]
        common: CommonOpts,
        /// Ascending power-of-two resolutions (at least three).
        #[arg(long, value_delimiter = ',', required = true)]
        resolutions: Vec<usize>,
        /// Reference resolution; defaults to twice the finest listed one.
        #[arg(long = "ref")]
        reference: Option<usize>,
    },
    /// Print the case catalog with default parameters.
    ListCases,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            common,
            snap_every,
            snap_times,
            formats,
        } => {
            let mut config = common.to_config()?;
            config.snapshot_every_steps = snap_every.or(config.snapshot_every_steps);
            config.snapshot_times = snap_times.or(config.snapshot_times);
            config.formats = formats.or(config.formats);
            let out = execute_run(config.resolve()?)?;
            let last = out.ledger.last();
            emit(&format!(
                "case {} finished: {} steps to t = {}, energy {}, mass {}, wall {:.2}s\n",
                out.setup.info.name,
                out.steps,
                format_g17(last.t),
                format_g17(last.energy),
                format_g17(last.mass),
                out.wall_seconds
            ));
            Ok(())
        }
        Command::Sweep {
            common,
            resolutions,
            reference,
        } => {
            let config = common.to_config()?;
            let rows = execute_sweep(&config, &resolutions, reference)?;
            let csv = sweep_csv_string(&rows);
            emit(&csv);
            if let Some(dir) = resolved_out_dir(&config) {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("sweep.csv"), csv)?;
            }
            Ok(())
        }
        Command::Kconv {
            common,
            resolutions,
            reference,
        } => {
            let config = common.to_config()?;
            let reference =
                reference.unwrap_or_else(|| resolutions.last().copied().unwrap_or(32) * 2);
            let entries = execute_kconv(&config, &resolutions, reference)?;
            let csv = ladder_csv_string(&entries);
            emit(&csv);
            if let Some(dir) = resolved_out_dir(&config) {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("kconv.csv"), csv)?;
            }
            Ok(())
        }
        Command::ListCases => {
            let mut listing = String::new();
            for info in cases::catalog() {
                let shape = if info.quasi_1d {
                    format!("{} cells (strip)", info.default_nx)
                } else {
                    format!("{}x{}", info.default_nx, info.default_ny)
                };
                listing.push_str(&format!(
                    "{:24} {:18} g={:<10} omega={:<12} alpha={:<4} T={:<8} {}\n",
                    info.name,
                    shape,
                    info.g,
                    info.omega,
                    info.alpha,
                    info.default_t_final,
                    info.summary
                ));
            }
            emit(&listing);
            Ok(())
        }
    }
}

/// Write to stdout, treating an early-closed pipe (`rsw ... | head`) as
/// normal termination rather than a panic.
fn emit(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
    let _ = stdout.flush();
}

fn resolved_out_dir(config: &RunConfig) -> Option<PathBuf> {
    let dir = PathBuf::from(config.out_dir.as_ref()?);
    Some(match std::env::var_os(rsw_core::run::OUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir,
    })
}
