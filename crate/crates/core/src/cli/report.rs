use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{io_err, CliError, EVENTS_FILE};
use crate::engine::{layer_distribution, EvaluationEvent};
use crate::genome::{parse_key, LayerGene, PoolKind};

pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub stats: PathBuf,
    pub layers: PathBuf,
    pub speedup: Option<PathBuf>,
    pub best: PathBuf,
}

pub fn read_events(dir: &Path) -> Result<Vec<EvaluationEvent>, CliError> {
    let mut r = csv::Reader::from_path(dir.join(EVENTS_FILE))?;
    r.deserialize().map(|e| e.map_err(CliError::from)).collect()
}

/// Population of every generation: the last row logged for each slot.
fn populations(events: &[EvaluationEvent]) -> BTreeMap<u32, Vec<&EvaluationEvent>> {
    let mut slots: BTreeMap<u32, BTreeMap<usize, &EvaluationEvent>> = BTreeMap::new();
    for e in events {
        slots.entry(e.generation).or_default().insert(e.slot, e);
    }
    slots
        .into_iter()
        .map(|(g, by_slot)| (g, by_slot.into_values().collect()))
        .collect()
}

/// Evaluation time actually spent per generation.
fn spent_seconds(events: &[EvaluationEvent]) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for e in events {
        *out.entry(e.generation).or_insert(0.0) += if e.cache_hit { 0.0 } else { e.wall_seconds };
    }
    out
}

#[derive(Serialize)]
struct StatsRow {
    generation: u32,
    epochs: u32,
    fitness_min: f64,
    fitness_mean: f64,
    fitness_max: f64,
    accuracy_min: f64,
    accuracy_mean: f64,
    accuracy_max: f64,
    wall_seconds: f64,
}

#[derive(Serialize)]
struct LayerRow {
    generation: u32,
    depth: usize,
    skip: usize,
    pool: usize,
}

#[derive(Serialize)]
struct SpeedupRow {
    generation: u32,
    wall_seconds: f64,
    baseline_wall_seconds: f64,
    /// Baseline minus this run; positive is a saving.
    delta_seconds: f64,
    cumulative_delta_seconds: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(path))
}

fn min_mean_max(values: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        n += 1;
    }
    (lo, sum / n.max(1) as f64, hi)
}

/// Writes `stats.csv`, `layers.csv`, `best.txt` and, given a baseline run,
/// `speedup.csv` into `<dir>/report`. Everything is derived from the event
/// logs, so the report can be regenerated at any point of a run.
pub fn cmd_report(dir: &Path, baseline: Option<&Path>) -> Result<ReportFiles, CliError> {
    let events = read_events(dir)?;
    let pops = populations(&events);
    let spent = spent_seconds(&events);
    let out = dir.join(REPORT_DIR);
    fs::create_dir_all(&out).map_err(io_err(&out))?;

    let stats = out.join("stats.csv");
    write_csv(
        &stats,
        pops.iter().map(|(&g, pop)| {
            let (fitness_min, fitness_mean, fitness_max) = min_mean_max(pop.iter().map(|e| e.fitness));
            let (accuracy_min, accuracy_mean, accuracy_max) = min_mean_max(pop.iter().map(|e| e.accuracy));
            StatsRow {
                generation: g,
                epochs: pop[0].epochs,
                fitness_min,
                fitness_mean,
                fitness_max,
                accuracy_min,
                accuracy_mean,
                accuracy_max,
                wall_seconds: spent[&g],
            }
        }),
    )?;

    let layers = out.join("layers.csv");
    let mut layer_rows = Vec::new();
    for (&g, pop) in &pops {
        let genomes = pop
            .iter()
            .map(|e| parse_key(&e.key))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::CorruptState {
                path: dir.join(EVENTS_FILE),
                reason: e.to_string(),
            })?;
        for (depth, c) in layer_distribution(genomes.iter()).into_iter().enumerate() {
            layer_rows.push(LayerRow {
                generation: g,
                depth,
                skip: c.skip,
                pool: c.pool,
            });
        }
    }
    write_csv(&layers, layer_rows)?;

    let speedup = match baseline {
        None => None,
        Some(base_dir) => match read_events(base_dir) {
            Err(e) => {
                log::warn!("skipping speed-up report, baseline {} unreadable: {e}", base_dir.display());
                None
            }
            Ok(base_events) => {
                let base = spent_seconds(&base_events);
                let path = out.join("speedup.csv");
                let mut cumulative = 0.0;
                let rows: Vec<SpeedupRow> = spent
                    .iter()
                    .filter_map(|(g, &secs)| {
                        let b = *base.get(g)?;
                        cumulative += b - secs;
                        Some(SpeedupRow {
                            generation: *g,
                            wall_seconds: secs,
                            baseline_wall_seconds: b,
                            delta_seconds: b - secs,
                            cumulative_delta_seconds: cumulative,
                        })
                    })
                    .collect();
                write_csv(&path, rows)?;
                Some(path)
            }
        },
    };

    let best = out.join("best.txt");
    let text = render_best(&pops);
    fs::write(&best, text).map_err(io_err(&best))?;
    Ok(ReportFiles {
        stats,
        layers,
        speedup,
        best,
    })
}

fn render_best(pops: &BTreeMap<u32, Vec<&EvaluationEvent>>) -> String {
    let all: Vec<&EvaluationEvent> = pops.values().flatten().copied().collect();
    let pick = |better: fn(&EvaluationEvent, &EvaluationEvent) -> bool| {
        all.iter().copied().reduce(|best, e| if better(e, best) { e } else { best })
    };
    let mut text = String::new();
    let sections = [
        ("best by fitness", pick(|a, b| a.fitness > b.fitness)),
        ("best by accuracy", pick(|a, b| a.accuracy > b.accuracy)),
    ];
    for (title, best) in sections {
        let Some(e) = best else { continue };
        let _ = writeln!(
            text,
            "{title}: generation {}, fitness {:.4}, accuracy {:.4}, {} epochs, {:.1} s\n  {}",
            e.generation, e.fitness, e.accuracy, e.epochs, e.wall_seconds, e.key
        );
        text.push_str(&render_architecture(&e.key));
        text.push('\n');
    }
    text
}

/// One line per layer of the genome with key `key`.
pub fn render_architecture(key: &str) -> String {
    let Ok(genome) = parse_key(key) else {
        return format!("  unparseable key {key}\n");
    };
    let mut text = String::new();
    for (i, gene) in genome.layers().iter().enumerate() {
        let line = match *gene {
            LayerGene::Skip { filters_1, filters_2 } => {
                format!("skip  conv3x3({filters_1}) relu conv3x3({filters_2}) + shortcut, relu")
            }
            LayerGene::Pool(PoolKind::Max) => "pool  max 2x2".to_owned(),
            LayerGene::Pool(PoolKind::Average) => "pool  average 2x2".to_owned(),
        };
        let _ = writeln!(text, "  {:>3}  {line}", i + 1);
    }
    text.push_str("       dense softmax\n");
    text
}
