//! The command-line workflow driven from code: run a baseline and a partial
//! training search, interrupt and resume one, then report.
//!
//!     cargo run --release --example cli_workflow [output-dir]
//!
//! The same steps with the binary:
//!
//!     evotopo run examples/manifests/baseline.toml
//!     evotopo run examples/manifests/partial.toml
//!     evotopo report runs/partial --baseline runs/baseline

use std::path::PathBuf;

use evotopo::cli::{cmd_report, cmd_resume, cmd_run, cmd_run_with, read_summary, render_summary, RunOptions};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("evotopo-demo"));
    std::fs::create_dir_all(&out)?;
    let manifest = |name: &str, schedule: &str| -> anyhow::Result<PathBuf> {
        let path = out.join(format!("{name}.toml"));
        let text = format!("output_dir = \"{name}\"\n\n[experiment]\nseed = 1\nschedule = {schedule}\n");
        std::fs::write(&path, text)?;
        Ok(path)
    };
    let baseline = cmd_run(&manifest("baseline", "{ mode = \"flat\", epochs = 60 }")?)?;

    let stop = RunOptions {
        stop_after: Some(8),
        ..RunOptions::from_env()?
    };
    let partial = cmd_run_with(&manifest("partial", "{ mode = \"linear\", lo = 30, hi = 70 }")?, &stop)?;
    println!("partial run stopped after generation {}", partial.completed);
    let partial = cmd_resume(&partial.dir)?;

    let files = cmd_report(&partial.dir, Some(&baseline.dir))?;
    print!("{}", render_summary(&[read_summary(&baseline.dir)?, read_summary(&partial.dir)?]));
    println!("report in {}", files.stats.parent().unwrap().display());
    Ok(())
}
