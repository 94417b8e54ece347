//! Command-line front end: design, simulate, bound, select-upsilon, sweep.

mod commands;
mod fail;
mod plot;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epigame::dynamics::Sampling;

use crate::commands::SweepOptions;
use crate::fail::Failure;
use crate::scenario::Scenario;

#[derive(Parser)]
#[command(name = "epigame", version, about = "Dynamic payoff design for epidemic population games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the optimal target and print the design report.
    Design {
        #[arg(long)]
        scenario: PathBuf,
        /// Write `<name>_design.toml` (the scenario plus its design report) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the closed loop and write the trajectory CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Relative integration tolerance (overrides the scenario).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        /// Record every accepted step instead of a fixed grid.
        #[arg(long)]
        every_step: bool,
        #[arg(long)]
        plot: bool,
    },
    /// Evaluate the anytime bound on I/I* over a range of upsilon.
    Bound {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated upsilon values (overrides the scenario grid).
        #[arg(long, value_delimiter = ',')]
        upsilon: Option<Vec<f64>>,
        /// Also evaluate the brute-force grid with this many points per axis.
        #[arg(long)]
        oracle_grid: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: bool,
    },
    /// Largest upsilon whose anytime bound stays at or below a target.
    SelectUpsilon {
        #[arg(long)]
        scenario: PathBuf,
        /// Overshoot target for I/I* (defaults to the scenario's `bound.overshoot_target`).
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Write `<name>_upsilon.toml` with the selected upsilon here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the jobs of a manifest in parallel.
    Sweep {
        #[arg(long, alias = "scenario")]
        manifest: PathBuf,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        plot: bool,
    },
}

fn check_positive(name: &str, v: Option<f64>) -> Result<(), Failure> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(Failure::validation(format!("InvalidParameter: --{name} must be positive, got {x}")))
        }
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<i32, Failure> {
    let text = match cli.command {
        Command::Design { scenario, out } => {
            commands::design(&Scenario::load(&scenario)?, out.as_deref())?.text
        }
        Command::Simulate {
            scenario,
            out,
            tol,
            t_end,
            every_step,
            plot,
        } => {
            check_positive("tol", tol)?;
            check_positive("t-end", t_end)?;
            let mut s = Scenario::load(&scenario)?;
            if let Some(tol) = tol {
                s.run.rtol = tol;
            }
            if let Some(t) = t_end {
                s.run.t_end = t;
            }
            if every_step {
                s.run.sampling = Sampling::EveryStep;
            }
            commands::simulate(&s, &out, plot)?.text
        }
        Command::Bound {
            scenario,
            upsilon,
            oracle_grid,
            tol,
            out,
            plot,
        } => {
            check_positive("tol", Some(tol))?;
            if let Some(bad) = upsilon.iter().flatten().find(|u| !(**u > 0.0 && u.is_finite())) {
                return Err(Failure::validation(format!("InvalidParameter: upsilon = {bad}")));
            }
            if oracle_grid.is_some_and(|g| g < 2) {
                return Err(Failure::validation("InvalidParameter: --oracle-grid must be at least 2".into()));
            }
            let s = Scenario::load(&scenario)?;
            commands::bound(&s, upsilon.as_deref(), oracle_grid, tol, out.as_deref(), plot)?.text
        }
        Command::SelectUpsilon {
            scenario,
            target,
            tol,
            out,
        } => {
            check_positive("tol", Some(tol))?;
            let s = Scenario::load(&scenario)?;
            commands::select(&s, target, tol, out.as_deref())?.text
        }
        Command::Sweep {
            manifest,
            out,
            tol,
            t_end,
            plot,
        } => {
            check_positive("tol", tol)?;
            check_positive("t-end", t_end)?;
            let (report, code) = commands::sweep(&manifest, &out, &SweepOptions { tol, t_end, plot })?;
            print!("{report}");
            return Ok(code);
        }
    };
    print!("{text}");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
