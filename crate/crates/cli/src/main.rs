use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fluidchain::app::{self, CompareOptions};
use fluidchain::scenario::{load_scenario, Method, Scenario};
use fluidchain::Error;

#[derive(Parser)]
#[command(name = "fluidchain", version, about = "Ball-jointed ellipsoids in an ideal fluid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write trajectory.csv and summary.json
    Run {
        scenario: PathBuf,
        #[arg(long)]
        integrator: Option<Method>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write every Nth step (1 = full rate)
        #[arg(long)]
        cadence: Option<usize>,
        /// Project RK rotations back onto SO(3) after every step
        #[arg(long)]
        reorthonormalize: bool,
    },
    /// Compare the velocity histories of two trajectory files
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        /// Window length in seconds for windowed statistics
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        /// Also write per-record differences to this CSV file
        #[arg(long)]
        diff: Option<PathBuf>,
    },
    /// Print the mass and inertia matrices of every body
    Inertia {
        scenario: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            scenario,
            integrator,
            h,
            duration,
            out,
            cadence,
            reorthonormalize,
        } => {
            let mut file = load_scenario(&scenario)?.file;
            if let Some(m) = integrator {
                file.integrator.method = m;
            }
            if let Some(h) = h {
                file.integrator.h = h;
            }
            if let Some(t) = duration {
                file.duration = t;
            }
            if let Some(c) = cadence {
                file.cadence = c;
            }
            file.integrator.reorthonormalize |= reorthonormalize;
            let scenario = Scenario::from_file(file)?;
            let summary = app::run_to_dir(&scenario, &out)?;
            println!("{}", to_json(&summary)?);
        }
        Command::Compare {
            a,
            b,
            threshold,
            window,
            diff,
        } => {
            if !(threshold > 0.0 && window > 0.0) {
                return Err(Error::InvalidSettings("threshold and window must be positive".into()));
            }
            let ta = app::read_trajectory_file(&a)?;
            let tb = app::read_trajectory_file(&b)?;
            let report = app::compare(&ta, &tb, &CompareOptions { threshold, window })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(path) = diff {
                app::write_differences(&ta, &tb, std::fs::File::create(path)?)?;
            }
            println!("{}", to_json(&report)?);
        }
        Command::Inertia { scenario, json } => {
            let report = app::inertia_report(&load_scenario(&scenario)?)?;
            if json {
                println!("{}", to_json(&report)?);
            } else {
                print!("{report}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class_name());
            ExitCode::FAILURE
        }
    }
}
