//! Experiment orchestration: seeded sample drawing, concurrent trial
//! execution, record-atomic persistence, resumption and aggregation.
//!
//! A run directory holds `config.json`, `manifest.json`, `samples.jsonl`,
//! `transcripts.jsonl`, `trials.jsonl` and `report.{csv,md,json}`. Reports
//! are always computed from the persisted trial records.

mod aggregate;
mod config;
mod records;
mod report;

pub use aggregate::{aggregate, aggregate_cell, cell_order, trial_failed, CellReport, RunReport, ACCURACY_CUTOFF};
pub use config::{DatasetSpec, ExperimentConfig, SensHeadline, StrategyParams};
pub use records::TrialRecord;
pub use report::{emit_report, render_csv, render_markdown, ReportFormat};

use std::collections::HashSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, CallContext, TranscriptRecord};
use crate::data::{draw_samples, import_samples, DataError, DistributionKind, DrawnSample, SampleLine};
use crate::metrics::{trial_orders, PcLeg};
use crate::order::SeedHasher;
use crate::strategies::{rank, CallLog, Session, StrategyConfig};
use records::{append_jsonl, read_jsonl, trim_torn_tail};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const TRIALS_FILE: &str = "trials.jsonl";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt run data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("config hash {current} does not match the run directory's {stored}")]
    ConfigMismatch { stored: String, current: String },
    #[error("remote run needs about {projected} backend calls; confirm to proceed")]
    ConfirmationRequired { projected: usize },
    #[error("cell {cell}: {failed} of {total} trials failed (limit {limit})")]
    TooManyFailures {
        cell: String,
        failed: usize,
        total: usize,
        limit: f64,
    },
    #[error("no samples for distribution {distribution} at K = {k}")]
    NoSamples { distribution: String, k: usize },
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Required before any call to a remote backend.
    pub confirm_remote: bool,
    /// Replaces the backend built from the config (tests, custom rankers).
    pub backend: Option<Arc<dyn Backend>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
}

/// Samples for one (distribution, K) pair, in draw order.
struct CellSamples {
    distribution: DistributionKind,
    k: usize,
    samples: Vec<DrawnSample>,
}

/// Runs (or continues) the experiment in `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    config.validate()?;
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| RunError::Config("output_dir is required".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let stored = read_manifest(&dir)?;
        if stored.config_hash != config.hash() {
            return Err(RunError::ConfigMismatch {
                stored: stored.config_hash,
                current: config.hash(),
            });
        }
    } else {
        if dir.join(TRIALS_FILE).exists() {
            return Err(RunError::Config(format!(
                "{} holds trials but no manifest",
                dir.display()
            )));
        }
        write_json(&dir.join(CONFIG_FILE), config)?;
        write_json(
            &manifest_path,
            &Manifest {
                config_hash: config.hash(),
            },
        )?;
    }
    execute(config, &dir, opts)
}

/// Completes a run directory's missing trials. Refuses when `config.json`
/// no longer hashes to the manifest.
pub fn resume(run_dir: &Path, opts: &RunOptions) -> Result<RunReport, RunError> {
    let config = load_config(run_dir)?;
    config.validate()?;
    execute(&config, run_dir, opts)
}

/// Re-aggregates a run directory without calling any backend.
pub fn load_report(run_dir: &Path) -> Result<RunReport, RunError> {
    let config = load_config(run_dir)?;
    let trials = run_dir.join(TRIALS_FILE);
    let records: Vec<TrialRecord> = read_jsonl(&trials)?;
    aggregate(&config, &records)
}

/// The run's config, checked against its manifest.
pub fn load_config(run_dir: &Path) -> Result<ExperimentConfig, RunError> {
    let path = run_dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| RunError::Corrupt(format!("{}: {e}", path.display())))?;
    config.output_dir = Some(run_dir.to_owned());
    let stored = read_manifest(run_dir)?;
    if stored.config_hash != config.hash() {
        return Err(RunError::ConfigMismatch {
            stored: stored.config_hash,
            current: config.hash(),
        });
    }
    Ok(config)
}

fn read_manifest(dir: &Path) -> Result<Manifest, RunError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| RunError::Corrupt(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Corrupt(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| RunError::io(path, e))
}

/// Seed for drawing the samples of one (distribution, K) cell.
pub fn sample_seed(experiment_seed: u64, distribution: DistributionKind, k: usize) -> u64 {
    SeedHasher::new(experiment_seed)
        .str("samples")
        .str(distribution.as_str())
        .u64(k as u64)
        .finish()
}

fn draw_all(config: &ExperimentConfig) -> Result<Vec<CellSamples>, RunError> {
    let mut out = Vec::new();
    match &config.dataset {
        DatasetSpec::Samples { path } => {
            let file = File::open(path).map_err(|e| RunError::io(path, e))?;
            let pool = import_samples(BufReader::new(file))?;
            for &distribution in &config.distributions {
                for &k in &config.k_values {
                    let samples: Vec<DrawnSample> = pool
                        .iter()
                        .filter(|s| s.distribution == distribution && s.sample.candidates().len() == k)
                        .take(config.sample_count)
                        .cloned()
                        .collect();
                    out.push(CellSamples {
                        distribution,
                        k,
                        samples,
                    });
                }
            }
        }
        dataset => {
            let catalog = dataset.load()?.expect("catalog-backed dataset");
            for &distribution in &config.distributions {
                for &k in &config.k_values {
                    let seed = sample_seed(config.experiment_seed, distribution, k);
                    let samples =
                        draw_samples(&catalog, k, distribution, config.sample_count, config.history_len, seed)?;
                    out.push(CellSamples {
                        distribution,
                        k,
                        samples,
                    });
                }
            }
        }
    }
    for c in &out {
        if c.samples.is_empty() {
            return Err(RunError::NoSamples {
                distribution: c.distribution.as_str().into(),
                k: c.k,
            });
        }
    }
    Ok(out)
}

/// Samples from the run directory, drawing and persisting them first if absent.
fn cell_samples(config: &ExperimentConfig, dir: &Path) -> Result<Vec<CellSamples>, RunError> {
    let path = dir.join(SAMPLES_FILE);
    if path.exists() {
        let lines: Vec<SampleLine> = read_jsonl(&path)?;
        let mut cells: Vec<CellSamples> = Vec::new();
        for line in lines {
            let drawn = line.into_drawn().map_err(RunError::Corrupt)?;
            let key = (drawn.distribution, drawn.sample.candidates().len());
            match cells.iter_mut().find(|c| (c.distribution, c.k) == key) {
                Some(c) => c.samples.push(drawn),
                None => cells.push(CellSamples {
                    distribution: key.0,
                    k: key.1,
                    samples: vec![drawn],
                }),
            }
        }
        return Ok(cells);
    }
    let cells = draw_all(config)?;
    let lines: Vec<SampleLine> = cells
        .iter()
        .flat_map(|c| c.samples.iter().map(SampleLine::from))
        .collect();
    let tmp = dir.join(format!("{SAMPLES_FILE}.tmp"));
    let _ = std::fs::remove_file(&tmp);
    append_jsonl(&tmp, &lines)?;
    std::fs::rename(&tmp, &path).map_err(|e| RunError::io(&path, e))?;
    Ok(cells)
}

struct Job<'a> {
    sample: &'a DrawnSample,
    sample_index: usize,
    trial: usize,
}

fn execute(config: &ExperimentConfig, dir: &Path, opts: &RunOptions) -> Result<RunReport, RunError> {
    let backend: Arc<dyn Backend> = match &opts.backend {
        Some(b) => b.clone(),
        None => config.backend.build()?,
    };
    let strategies = config.strategy_configs()?;
    let cells = cell_samples(config, dir)?;
    let trials_path = dir.join(TRIALS_FILE);
    let transcripts_path = dir.join(TRANSCRIPTS_FILE);
    trim_torn_tail(&trials_path)?;
    trim_torn_tail(&transcripts_path)?;
    let existing: Vec<TrialRecord> = read_jsonl(&trials_path)?;
    let done: HashSet<String> = existing.iter().map(|r| r.key.clone()).collect();

    let missing_key = |c: &CellSamples, s: &StrategyConfig, i: usize, t: usize| {
        !done.contains(&TrialRecord::make_key(c.distribution, c.k, &s.label(), i, t))
    };
    let mut projected = 0;
    for c in &cells {
        for s in &strategies {
            for i in 0..c.samples.len() {
                for t in 0..config.trials {
                    if missing_key(c, s, i, t) {
                        projected += 2 * s.calls_per_ranking(c.k);
                    }
                }
            }
        }
    }
    if projected > 0 {
        debug!("projected backend calls: {projected}");
        if backend.is_remote() && !opts.confirm_remote {
            return Err(RunError::ConfirmationRequired { projected });
        }
        backend.ping()?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.backend.max_concurrency.max(1))
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let run_id = config.hash()[..12].to_owned();
    let chunk = (config.backend.max_concurrency * 4).max(16);
    let mut all = existing;

    for c in &cells {
        for s in &strategies {
            let label = s.label();
            let jobs: Vec<Job> = c
                .samples
                .iter()
                .enumerate()
                .flat_map(|(i, sample)| {
                    (0..config.trials).map(move |t| Job {
                        sample,
                        sample_index: i,
                        trial: t,
                    })
                })
                .filter(|j| missing_key(c, s, j.sample_index, j.trial))
                .collect();
            for batch in jobs.chunks(chunk) {
                let results: Vec<(TrialRecord, Vec<TranscriptRecord>)> = pool.install(|| {
                    batch
                        .par_iter()
                        .map(|j| run_trial(config, backend.as_ref(), s, c.distribution, c.k, j, &run_id))
                        .collect()
                });
                let (recs, transcripts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
                let transcripts: Vec<TranscriptRecord> = transcripts.into_iter().flatten().collect();
                append_jsonl(&transcripts_path, &transcripts)?;
                append_jsonl(&trials_path, &recs)?;
                all.extend(recs);
            }
            let cell_records: Vec<&TrialRecord> = all
                .iter()
                .filter(|r| r.distribution == c.distribution && r.k == c.k && r.strategy == label)
                .collect();
            let failed = cell_records.iter().filter(|r| trial_failed(r)).count();
            let total = cell_records.len();
            if total > 0 && failed as f64 / total as f64 > config.max_failure_fraction {
                return Err(RunError::TooManyFailures {
                    cell: format!("{}/{}/{label}", c.distribution.as_str(), c.k),
                    failed,
                    total,
                    limit: config.max_failure_fraction,
                });
            }
        }
    }

    let persisted: Vec<TrialRecord> = read_jsonl(&trials_path)?;
    let report = aggregate(config, &persisted)?;
    emit_report(&report, dir, &ReportFormat::ALL)?;
    Ok(report)
}

fn run_trial(
    config: &ExperimentConfig,
    backend: &dyn Backend,
    strategy: &StrategyConfig,
    distribution: DistributionKind,
    k: usize,
    job: &Job<'_>,
    run_id: &str,
) -> (TrialRecord, Vec<TranscriptRecord>) {
    let sample = &job.sample.sample;
    let sample_key = format!("{}/{k}/{}", distribution.as_str(), job.sample_index);
    let shuffled_input = distribution.shuffles_input();
    let (first, second) = trial_orders(
        sample.candidates(),
        config.experiment_seed,
        &sample_key,
        job.trial,
        shuffled_input,
    );
    let mut log = CallLog::default();
    let mut context = CallContext::new(sample);
    context.run_id = run_id.to_owned();
    context.sample_key = sample_key.clone();
    context.trial = job.trial;

    let mut outputs: [Vec<Option<Vec<crate::types::ItemId>>>; 2] = [Vec::new(), Vec::new()];
    let mut errors = Vec::new();
    let mut repaired = 0;
    let mut backend_error = None;
    for (slot, (leg, order)) in [(PcLeg::Shuffled, &first), (PcLeg::Reversed, &second)]
        .into_iter()
        .enumerate()
    {
        let seed = SeedHasher::new(config.experiment_seed)
            .str(&sample_key)
            .u64(job.trial as u64)
            .str(leg.as_str())
            .finish();
        let mut ctx = context.clone();
        ctx.leg = Some(leg);
        let mut session = Session::new(backend, ctx, &mut log);
        match rank(sample, order, strategy, seed, &mut session) {
            Ok(results) => {
                for r in results {
                    match r {
                        Ok(ranking) => {
                            let repairs = &ranking.provenance().repairs;
                            if !repairs.is_clean() || repairs.retries > 0 {
                                repaired += 1;
                            }
                            outputs[slot].push(Some(ranking.into_ids()));
                        }
                        Err(e) => {
                            errors.push(format!("{}: {e}", leg.as_str()));
                            outputs[slot].push(None);
                        }
                    }
                }
            }
            Err(e) => {
                backend_error = Some(format!("{}: {e}", leg.as_str()));
                break;
            }
        }
    }
    if backend_error.is_some() {
        outputs = [Vec::new(), Vec::new()];
    }
    let [shuffled_outputs, reversed_outputs] = outputs;
    let record = TrialRecord {
        key: TrialRecord::make_key(distribution, k, &strategy.label(), job.sample_index, job.trial),
        distribution,
        k,
        strategy: strategy.label(),
        sample_index: job.sample_index,
        user_id: sample.user_id().to_owned(),
        trial: job.trial,
        shuffled_input,
        shuffled_order: first.ids().to_vec(),
        reversed_order: second.ids().to_vec(),
        shuffled_outputs,
        reversed_outputs,
        ground_truth: sample.ground_truth().to_vec(),
        repaired_outputs: repaired,
        errors,
        backend_error,
        calls: log.calls,
    };
    (record, log.records)
}
