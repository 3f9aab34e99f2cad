use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evotopo::cli::{cmd_report, cmd_resume, cmd_run, read_summary, render_summary, CliError, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "evotopo", version, about = "Genetic search over CNN topologies")]
#[command(after_help = format!("Set {WORKERS_ENV} to override the number of concurrent evaluations."))]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run from a TOML manifest.
    Run { manifest: PathBuf },
    /// Continue an interrupted run.
    Resume { dir: PathBuf },
    /// Write plot-ready CSVs and a best-architecture summary for a run.
    Report {
        dir: PathBuf,
        /// Run to compute per-generation wall-time savings against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Args::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { manifest } => {
            let out = cmd_run(&manifest)?;
            print!("{}", render_summary(&[read_summary(&out.dir)?]));
        }
        Command::Resume { dir } => {
            let out = cmd_resume(&dir)?;
            if out.finished {
                print!("{}", render_summary(&[read_summary(&out.dir)?]));
            }
        }
        Command::Report { dir, baseline } => {
            let files = cmd_report(&dir, baseline.as_deref())?;
            let mut rows = vec![read_summary(&dir)?];
            if let Some(b) = &baseline {
                match read_summary(b) {
                    Ok(row) => rows.insert(0, row),
                    Err(e) => log::warn!("baseline summary unavailable: {e}"),
                }
            }
            print!("{}", render_summary(&rows));
            println!("wrote {}", files.stats.parent().unwrap_or(&dir).display());
        }
    }
    Ok(())
}
