//! Run directories: `run` starts one from a manifest, `resume` continues an
//! interrupted one, `report` turns its event log into plot-ready tables.
//!
//! A run directory holds
//!
//! ```text
//! manifest.toml     copy of the manifest the run was started from
//! state.json        manifest hash plus snapshot after the last completed generation
//! history.jsonl     one GenerationStats record per generation
//! events.csv        one row per evaluated individual
//! checkpoints/      partially trained networks (CNN evaluator)
//! best.json         best-by-fitness and best-by-accuracy individuals
//! summary.csv       one row of the variant comparison table
//! ```

mod manifest;
mod report;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::engine::{
    CheckpointStore, EngineError, EvaluationEvent, EvolutionRun, GenerationStats, Individual, RunSnapshot, ScheduleMode,
};
use crate::nn::test_accuracy;

pub use manifest::{
    manifest_hash, parse_manifest, CifarSource, DatasetSpec, EvaluatorKind, LoadedManifest, PreparedData, RunManifest,
    SyntheticSource, TrainingSection,
};
pub use report::{cmd_report, read_events, ReportFiles};

/// Overrides the manifest's worker count without changing the run.
pub const WORKERS_ENV: &str = "EVOTOPO_WORKERS";

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const STATE_FILE: &str = "state.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const EVENTS_FILE: &str = "events.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const BEST_FILE: &str = "best.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("{0} already contains a run; use `resume`")]
    AlreadyStarted(PathBuf),
    #[error("{0} is not a run directory (no {MANIFEST_FILE})")]
    NotARun(PathBuf),
    #[error("manifest hash {found} does not match the run's {expected}")]
    ManifestChanged { expected: String, found: String },
    #[error("corrupt run state in {path}: {reason}")]
    CorruptState { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad {name} value {value:?}")]
    BadEnv { name: &'static str, value: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// What `state.json` holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistedState {
    pub manifest_sha256: String,
    pub snapshot: RunSnapshot,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    /// Stop once this many generations are complete, leaving a resumable run.
    pub stop_after: Option<u32>,
}

impl RunOptions {
    /// Options with the worker override taken from [`WORKERS_ENV`].
    pub fn from_env() -> Result<Self, CliError> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or(CliError::BadEnv { name: WORKERS_ENV, value: v })?,
            ),
            Err(_) => None,
        };
        Ok(Self {
            workers,
            stop_after: None,
        })
    }
}

/// Result of a finished (or deliberately stopped) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub completed: u32,
    pub finished: bool,
    pub summary: Option<SummaryRow>,
}

pub fn cmd_run(manifest_path: &Path) -> Result<RunOutcome, CliError> {
    cmd_run_with(manifest_path, &RunOptions::from_env()?)
}

/// Starts a new run in the manifest's output directory.
pub fn cmd_run_with(manifest_path: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let loaded = LoadedManifest::read(manifest_path)?;
    let dir = loaded.output_dir();
    if dir.join(STATE_FILE).exists() || dir.join(MANIFEST_FILE).exists() {
        return Err(CliError::AlreadyStarted(dir));
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_atomic(&dir.join(MANIFEST_FILE), loaded.text.as_bytes())?;
    drive(&dir, &loaded, None, opts)
}

pub fn cmd_resume(dir: &Path) -> Result<RunOutcome, CliError> {
    cmd_resume_with(dir, &RunOptions::from_env()?)
}

/// Continues the run in `dir` after its last completed generation.
pub fn cmd_resume_with(dir: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(CliError::NotARun(dir.to_owned()));
    }
    let loaded = LoadedManifest::read(&manifest_path)?;
    let state_path = dir.join(STATE_FILE);
    let snapshot = if state_path.exists() {
        let corrupt = |reason: String| CliError::CorruptState {
            path: state_path.clone(),
            reason,
        };
        let state: PersistedState =
            serde_json::from_str(&read_text(&state_path)?).map_err(|e| corrupt(e.to_string()))?;
        if state.manifest_sha256 != loaded.hash() {
            return Err(CliError::ManifestChanged {
                expected: state.manifest_sha256,
                found: loaded.hash(),
            });
        }
        if state.snapshot.state.population.is_empty() != (state.snapshot.state.completed == 0) {
            return Err(corrupt("population does not match completed generations".into()));
        }
        Some(state.snapshot)
    } else {
        None
    };
    let generations = loaded.manifest.experiment.generations;
    if let Some(s) = &snapshot {
        if s.state.completed >= generations && dir.join(SUMMARY_FILE).exists() {
            log::info!("{} already complete", dir.display());
            return Ok(RunOutcome {
                dir: dir.to_owned(),
                completed: s.state.completed,
                finished: true,
                summary: None,
            });
        }
    }
    drive(dir, &loaded, snapshot, opts)
}

fn drive(
    dir: &Path,
    loaded: &LoadedManifest,
    snapshot: Option<RunSnapshot>,
    opts: &RunOptions,
) -> Result<RunOutcome, CliError> {
    let manifest = &loaded.manifest;
    let (evaluator, test_set) = manifest.build_evaluator()?;
    let mut cfg = manifest.experiment.clone();
    if let Some(w) = opts.workers {
        cfg.workers = w;
    }
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    let mut run = match snapshot {
        Some(s) => EvolutionRun::restore(cfg, evaluator.as_ref(), s, Some(ckpt_dir))?,
        None => EvolutionRun::with_store(cfg, evaluator.as_ref(), CheckpointStore::persistent(ckpt_dir)?)?,
    };
    truncate_logs(dir, run.state().completed)?;
    // files from an interrupted generation are not in the index
    run.checkpoints().prune_unreferenced()?;

    let hash = loaded.hash();
    while !run.is_finished() && opts.stop_after.is_none_or(|s| run.state().completed < s) {
        let outcome = run.step()?;
        append_history(dir, &outcome.stats)?;
        append_events(dir, &outcome.events)?;
        let state = PersistedState {
            manifest_sha256: hash.clone(),
            snapshot: run.snapshot(),
        };
        write_atomic(&dir.join(STATE_FILE), serde_json::to_string(&state)?.as_bytes())?;
        run.checkpoints().prune_unreferenced()?;
        let s = &outcome.stats;
        log::info!(
            "generation {}/{}: {} epochs, fitness max {:.4}, accuracy max {:.4}, {} evaluations, {} cache hits",
            s.generation,
            manifest.experiment.generations,
            s.epochs,
            s.fitness_max,
            s.accuracy_max,
            s.evaluations,
            s.cache_hits
        );
    }
    let completed = run.state().completed;
    if !run.is_finished() {
        return Ok(RunOutcome {
            dir: dir.to_owned(),
            completed,
            finished: false,
            summary: None,
        });
    }
    let summary = finalize(dir, manifest, &run, test_set.as_deref())?;
    Ok(RunOutcome {
        dir: dir.to_owned(),
        completed,
        finished: true,
        summary: Some(summary),
    })
}

/// Drops log lines written after the last completed generation.
fn truncate_logs(dir: &Path, completed: u32) -> Result<(), CliError> {
    let history = dir.join(HISTORY_FILE);
    if history.exists() {
        let text = read_text(&history)?;
        let kept: String = text
            .split_inclusive('\n')
            .filter(|l| l.ends_with('\n'))
            .take(completed as usize)
            .collect();
        if kept != text {
            write_atomic(&history, kept.as_bytes())?;
        }
    }
    let events = dir.join(EVENTS_FILE);
    if events.exists() {
        let text = read_text(&events)?;
        let mut lines = text.split_inclusive('\n').filter(|l| l.ends_with('\n'));
        let header = lines.next().unwrap_or_default();
        let mut kept = header.to_owned();
        for line in lines {
            let generation: u32 = line
                .split(',')
                .next()
                .and_then(|g| g.parse().ok())
                .ok_or_else(|| CliError::CorruptState {
                    path: events.clone(),
                    reason: format!("unreadable row {line:?}"),
                })?;
            if generation <= completed {
                kept.push_str(line);
            }
        }
        if kept != text {
            write_atomic(&events, kept.as_bytes())?;
        }
    }
    Ok(())
}

fn append_history(dir: &Path, stats: &GenerationStats) -> Result<(), CliError> {
    let path = dir.join(HISTORY_FILE);
    let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
    let mut line = serde_json::to_string(stats)?;
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(io_err(&path))
}

fn append_events(dir: &Path, events: &[EvaluationEvent]) -> Result<(), CliError> {
    let path = dir.join(EVENTS_FILE);
    let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
    let f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(f);
    for e in events {
        w.serialize(e)?;
    }
    w.flush().map_err(io_err(&path))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestRecord {
    pub individual: Individual,
    /// Accuracy of the stored network on the held-out test set.
    pub test_accuracy: Option<f64>,
    pub checkpoint_file: Option<String>,
    pub checkpoint_epochs: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestFile {
    pub variant: String,
    pub evaluator: String,
    pub best_by_fitness: BestRecord,
    pub best_by_accuracy: BestRecord,
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub evaluator: String,
    pub best_fitness: f64,
    pub accuracy_of_fittest: f64,
    pub best_accuracy: f64,
    pub test_accuracy_of_fittest: Option<f64>,
    pub generations: u32,
    pub epochs: String,
    pub batch_size: usize,
    pub wall_hours: f64,
}

fn schedule_label(mode: ScheduleMode) -> String {
    match mode {
        ScheduleMode::Flat { epochs } => epochs.to_string(),
        ScheduleMode::Linear { lo, hi } => format!("{lo}-{hi}"),
    }
}

fn finalize(
    dir: &Path,
    manifest: &RunManifest,
    run: &EvolutionRun<'_>,
    test_set: Option<&Dataset>,
) -> Result<SummaryRow, CliError> {
    let state = run.state();
    let record = |ind: &Individual, name: &str| -> Result<BestRecord, CliError> {
        let stored = run.checkpoints().get(&ind.key());
        let mut rec = BestRecord {
            individual: ind.clone(),
            test_accuracy: None,
            checkpoint_file: None,
            checkpoint_epochs: stored.as_ref().map(|c| c.epochs),
        };
        if let (Some(stored), Some(test)) = (stored, test_set) {
            if let Some(model) = &stored.model {
                rec.test_accuracy = Some(test_accuracy(model, test).map_err(|e| EngineError::Store(e.to_string()))?);
                let file = format!("{name}.ckpt");
                write_atomic(&dir.join(&file), &model.to_bytes())?;
                rec.checkpoint_file = Some(file);
            }
        }
        Ok(rec)
    };
    let (Some(fittest), Some(accurate)) = (&state.best_by_fitness, &state.best_by_accuracy) else {
        return Err(CliError::CorruptState {
            path: dir.join(STATE_FILE),
            reason: "finished run without a best individual".into(),
        });
    };
    let best = BestFile {
        variant: manifest.experiment.variant().into(),
        evaluator: run_evaluator_name(manifest).into(),
        best_by_fitness: record(fittest, "best_fitness")?,
        best_by_accuracy: record(accurate, "best_accuracy")?,
    };
    write_atomic(&dir.join(BEST_FILE), serde_json::to_string_pretty(&best)?.as_bytes())?;

    let history = read_history(dir)?;
    let row = SummaryRow {
        variant: best.variant.clone(),
        evaluator: best.evaluator.clone(),
        best_fitness: fittest.fitness,
        accuracy_of_fittest: fittest.accuracy,
        best_accuracy: accurate.accuracy,
        test_accuracy_of_fittest: best.best_by_fitness.test_accuracy,
        generations: manifest.experiment.generations,
        epochs: schedule_label(manifest.experiment.schedule),
        batch_size: manifest.train_config().batch_size,
        wall_hours: history.iter().map(|s| s.wall_seconds).sum::<f64>() / 3600.0,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(&row)?;
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: dir.join(SUMMARY_FILE),
        source: e.into_error(),
    })?;
    write_atomic(&dir.join(SUMMARY_FILE), &bytes)?;
    Ok(row)
}

fn run_evaluator_name(manifest: &RunManifest) -> &'static str {
    match manifest.evaluator {
        EvaluatorKind::Surrogate => "surrogate",
        EvaluatorKind::Cnn => "cnn",
    }
}

pub fn read_history(dir: &Path) -> Result<Vec<GenerationStats>, CliError> {
    let path = dir.join(HISTORY_FILE);
    read_text(&path)?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(CliError::from))
        .collect()
}

pub fn read_summary(dir: &Path) -> Result<SummaryRow, CliError> {
    let path = dir.join(SUMMARY_FILE);
    let mut r = csv::Reader::from_path(&path)?;
    r.deserialize().next().ok_or_else(|| CliError::CorruptState {
        path,
        reason: "empty summary".into(),
    })?
    .map_err(CliError::from)
}

/// Renders summary rows as an aligned text table.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>11} {:>8} {:>6} {:>11}\n",
        "variant", "fitness", "accuracy", "best acc", "test acc", "generations", "epochs", "batch", "wall hours"
    );
    for r in rows {
        let test = r.test_accuracy_of_fittest.map_or("-".to_owned(), |t| format!("{t:.4}"));
        out.push_str(&format!(
            "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10} {:>11} {:>8} {:>6} {:>11.2}\n",
            r.variant,
            r.best_fitness,
            r.accuracy_of_fittest,
            r.best_accuracy,
            test,
            r.generations,
            r.epochs,
            r.batch_size,
            r.wall_hours
        ));
    }
    out
}
