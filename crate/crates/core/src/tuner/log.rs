//! Trial logs, run summaries and convergence reports.
//!
//! A run directory holds one subdirectory per strategy, each with one
//! JSON-lines trial log per layer and a `summary.json`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Strategy, TuneOutcome};
use crate::error::{Error, Result};

/// One oracle measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: IndexMap<String, u64>,
    /// Surrogate prediction at selection time, if there was one.
    pub predicted: Option<f64>,
    pub latency_s: f64,
    pub gflops: f64,
    pub fitness: f64,
    /// Best fitness over trials `0..=trial`.
    pub best_fitness: f64,
    pub t_wall_s: f64,
}

pub fn write_trials(mut writer: impl Write, trials: &[TrialRecord]) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trials(reader: impl BufRead) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn read_trial_file(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    read_trials(BufReader::new(fs::File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: String,
    pub seed: u64,
    pub best_config: IndexMap<String, u64>,
    pub best_fitness: f64,
    pub best_gflops: f64,
    pub best_latency_s: f64,
    pub measurements: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: Strategy,
    pub seed: u64,
    pub layers: Vec<LayerSummary>,
    pub total_measurements: usize,
    pub wall_seconds: f64,
}

impl Summary {
    pub fn new(strategy: Strategy, seed: u64, outcomes: &[TuneOutcome]) -> Self {
        let layers: Vec<LayerSummary> = outcomes
            .iter()
            .map(|o| LayerSummary {
                layer: o.layer.clone(),
                seed: o.seed,
                best_config: o.best_values.clone(),
                best_fitness: o.best.fitness,
                best_gflops: o.best.gflops,
                best_latency_s: o.best.latency,
                measurements: o.measurements,
                wall_seconds: o.wall_seconds,
            })
            .collect();
        Self {
            strategy,
            seed,
            total_measurements: layers.iter().map(|l| l.measurements).sum(),
            wall_seconds: layers.iter().map(|l| l.wall_seconds).sum(),
            layers,
        }
    }
}

/// Layer names become file names; anything outside `[A-Za-z0-9._-]` is
/// replaced by `_`.
pub fn log_file_name(layer: &str) -> String {
    let stem: String =
        layer.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' }).collect();
    format!("{stem}.jsonl")
}

/// Writes `<dir>/<strategy>/<layer>.jsonl` per outcome and
/// `<dir>/<strategy>/summary.json`. Returns the strategy directory.
pub fn write_run(dir: impl AsRef<Path>, strategy: Strategy, seed: u64, outcomes: &[TuneOutcome]) -> Result<PathBuf> {
    let sdir = dir.as_ref().join(strategy.name());
    fs::create_dir_all(&sdir)?;
    for o in outcomes {
        let file = fs::File::create(sdir.join(log_file_name(&o.layer)))?;
        write_trials(std::io::BufWriter::new(file), &o.trials)?;
    }
    let summary = Summary::new(strategy, seed, outcomes);
    fs::write(sdir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(sdir)
}

/// One point of a best-so-far convergence curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub layer: String,
    pub trial: usize,
    pub best_gflops: f64,
    pub best_fitness: f64,
}

/// Best-so-far curve of one trial log; `best_gflops` is the throughput of
/// the fittest configuration so far.
pub fn convergence(strategy: &str, layer: &str, trials: &[TrialRecord]) -> Vec<ReportRow> {
    let mut best: Option<(f64, f64)> = None;
    trials
        .iter()
        .map(|t| {
            if best.is_none_or(|(f, _)| t.fitness > f) {
                best = Some((t.fitness, t.gflops));
            }
            let (best_fitness, best_gflops) = best.expect("set above");
            ReportRow { strategy: strategy.to_string(), layer: layer.to_string(), trial: t.trial, best_gflops, best_fitness }
        })
        .collect()
}

/// Convergence rows for every trial log under `dir`, sorted by strategy
/// directory and file name.
pub fn collect_report(dir: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let dir = dir.as_ref();
    let mut strategies: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    strategies.sort();
    let mut rows = Vec::new();
    for sdir in strategies {
        let strategy = file_stem(&sdir)?;
        let mut logs: Vec<PathBuf> = fs::read_dir(&sdir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        logs.sort();
        for log in logs {
            let layer = file_stem(&log)?;
            rows.extend(convergence(&strategy, &layer, &read_trial_file(&log)?));
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("no trial logs found under {}", dir.display())));
    }
    Ok(rows)
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Config(format!("unusable path {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(trial: usize, fitness: f64, gflops: f64) -> TrialRecord {
        TrialRecord {
            trial,
            config: IndexMap::from([("tile_b".to_string(), 1)]),
            predicted: None,
            latency_s: 1.0 / fitness,
            gflops,
            fitness,
            best_fitness: fitness,
            t_wall_s: 0.0,
        }
    }

    #[test]
    fn jsonl_field_names() {
        let mut buf = Vec::new();
        write_trials(&mut buf, &[record(0, 2.0, 3.0)]).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["best_fitness", "config", "fitness", "gflops", "latency_s", "predicted", "t_wall_s", "trial"]);
        assert_eq!(read_trials(&buf[..]).unwrap(), vec![record(0, 2.0, 3.0)]);
    }

    #[test]
    fn convergence_tracks_fittest() {
        let trials = [record(0, 1.0, 5.0), record(1, 3.0, 2.0), record(2, 2.0, 9.0)];
        let rows = convergence("dcoc", "l", &trials);
        let got: Vec<_> = rows.iter().map(|r| (r.best_fitness, r.best_gflops)).collect();
        assert_eq!(got, vec![(1.0, 5.0), (3.0, 2.0), (3.0, 2.0)]);
    }

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(log_file_name("conv1"), "conv1.jsonl");
        assert_eq!(log_file_name("layer 3/a"), "layer_3_a.jsonl");
    }
}
