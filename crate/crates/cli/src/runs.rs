//! Training orchestration and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use opnet_core::autodiff::{checkpoint_bytes, read_checkpoint};
use opnet_core::fsio::write_atomic;
use opnet_core::models::{OperatorModel, VariantKind};
use opnet_core::solvers::Dataset;
use opnet_core::stats::ErrorSequence;
use opnet_core::training::{test_errors, train_run, TrainRecord};
use opnet_core::{Error, Result};

use crate::config::ExperimentConfig;

pub const ARTIFACT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged,
}

/// One `(variant, seed)` run. Paths are relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub variant: VariantKind,
    pub seed: u64,
    pub status: RunStatus,
    pub checkpoint: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub curve: Option<PathBuf>,
    pub errors: Option<PathBuf>,
    pub iterations: usize,
    pub seconds_per_iteration: Option<f64>,
    pub mean_error_percent: Option<f64>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: u32,
    pub config_hash: String,
    /// The emitted configuration the runs used.
    pub config: String,
    pub dataset: PathBuf,
    pub runs: Vec<RunEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.artifact_version != ARTIFACT_VERSION {
            return Err(Error::Format(format!("unsupported artifact version {}", m.artifact_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(path, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?))
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(&self.config)
    }

    /// Completed runs of `variant`, in seed order.
    pub fn completed(&self, variant: VariantKind) -> Vec<&RunEntry> {
        let mut runs: Vec<&RunEntry> = self
            .runs
            .iter()
            .filter(|r| r.variant == variant && r.status == RunStatus::Completed)
            .collect();
        runs.sort_by_key(|r| r.seed);
        runs
    }

    /// Every path the manifest names exists under `root`.
    pub fn check_files(&self, root: &Path) -> Result<()> {
        for r in &self.runs {
            for p in [&r.checkpoint, &r.record, &r.curve, &r.errors].into_iter().flatten() {
                if !root.join(p).is_file() {
                    return Err(Error::Format(format!("manifest names missing file {}", p.display())));
                }
            }
        }
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?))
}

pub fn run_dir_name(variant: VariantKind, seed: u64) -> String {
    format!("{variant}-s{seed}")
}

/// A fresh model for one run (its seed also fixes random embeddings).
pub fn build_model(cfg: &ExperimentConfig, dataset: &Dataset, variant: VariantKind, seed: u64) -> Result<OperatorModel> {
    OperatorModel::new(cfg.variant_spec(variant)?, cfg.arch, dataset.sensor_grid, seed)
}

pub fn load_model(cfg: &ExperimentConfig, dataset: &Dataset, entry: &RunEntry, root: &Path) -> Result<OperatorModel> {
    let mut model = build_model(cfg, dataset, entry.variant, entry.seed)?;
    let path = entry
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Format(format!("run {} has no checkpoint", run_dir_name(entry.variant, entry.seed))))?;
    let bytes = fs::read(root.join(path))?;
    let params = read_checkpoint(bytes.as_slice(), model.params())?;
    model.set_params(params)?;
    Ok(model)
}

pub fn error_sequence(variant: VariantKind, seed: u64, errors: Vec<f64>) -> Result<ErrorSequence> {
    ErrorSequence::new(variant.to_string(), seed, errors)
}

fn train_one(cfg: &ExperimentConfig, dataset: &Dataset, variant: VariantKind, seed: u64, root: &Path) -> Result<RunEntry> {
    let name = run_dir_name(variant, seed);
    let dir = Path::new("runs").join(&name);
    fs::create_dir_all(root.join(&dir))?;
    let model = build_model(cfg, dataset, variant, seed)?;
    let tcfg = cfg.train_config(seed);
    let trained = train_run(model, dataset, &dataset.pde, &tcfg)
        .and_then(|(model, record)| Ok((test_errors(&model, dataset, tcfg.eval_functions)?, model, record)));
    // a run whose weights overflow during evaluation counts as diverged too
    let (errors, model, record): (Vec<f64>, OperatorModel, TrainRecord) = match trained {
        Ok(done) => done,
        Err(e @ (Error::Divergence { .. } | Error::Evaluation { .. })) => {
            return Ok(RunEntry {
                variant,
                seed,
                status: RunStatus::Diverged,
                checkpoint: None,
                record: None,
                curve: None,
                errors: None,
                iterations: tcfg.iterations,
                seconds_per_iteration: None,
                mean_error_percent: None,
                message: Some(e.to_string()),
            });
        }
        Err(e) => return Err(e),
    };
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let seq = error_sequence(variant, seed, errors)?;

    let checkpoint = dir.join("model.ckpt");
    let record_path = dir.join("record.json");
    let curve = dir.join("curve.csv");
    let errors_path = dir.join("errors.csv");
    let bytes = checkpoint_bytes(model.params());
    write_atomic(&root.join(&checkpoint), |w| Ok(std::io::Write::write_all(w, &bytes)?))?;
    write_text(
        &root.join(&record_path),
        &serde_json::to_string_pretty(&record).expect("record serializes"),
    )?;
    record.write_csv(&root.join(&curve))?;
    write_text(&root.join(&errors_path), &seq.to_csv())?;
    Ok(RunEntry {
        variant,
        seed,
        status: RunStatus::Completed,
        checkpoint: Some(checkpoint),
        record: Some(record_path),
        curve: Some(curve),
        errors: Some(errors_path),
        iterations: record.iterations,
        seconds_per_iteration: Some(record.seconds_per_iteration),
        mean_error_percent: Some(mean),
        message: None,
    })
}

/// Trains every `(variant, seed)` pair on up to `cfg.jobs` workers and writes
/// `<out>/manifest.json` once all runs have finished.
pub fn train_all(cfg: &ExperimentConfig, mut progress: impl FnMut(&RunEntry) + Send) -> Result<RunManifest> {
    let dataset_path = cfg.dataset_path();
    let dataset = Dataset::load_for_training(&dataset_path)?;
    if dataset.pde != cfg.pde {
        return Err(Error::Config(format!(
            "dataset {} was generated for {:?}, configuration says {:?}",
            dataset_path.display(),
            dataset.pde,
            cfg.pde
        )));
    }
    let dataset_path = fs::canonicalize(&dataset_path)?;
    let root = cfg.out.clone();
    fs::create_dir_all(&root)?;
    let jobs: Vec<(VariantKind, u64)> = cfg
        .variants
        .iter()
        .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let workers = match cfg.jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len())
    .max(1);

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunEntry>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let progress = Mutex::new(&mut progress);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(variant, seed)) = jobs.get(i) else { break };
                let out = train_one(cfg, &dataset, variant, seed, &root);
                if let Ok(entry) = &out {
                    (progress.lock().expect("progress lock"))(entry);
                }
                results.lock().expect("results lock")[i] = Some(out);
            });
        }
    });
    let runs = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;

    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION,
        config_hash: cfg.hash(),
        config: cfg.emit(),
        dataset: dataset_path,
        runs,
    };
    manifest.check_files(&root)?;
    manifest.save(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Re-evaluates every completed run from its checkpoint and rewrites its
/// error sequence. Returns `(variant, seed, mean error)` per run.
pub fn evaluate_all(manifest_path: &Path, limit: Option<usize>) -> Result<Vec<(VariantKind, u64, f64)>> {
    let manifest = RunManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let cfg = manifest.config()?;
    let dataset = Dataset::load(&manifest.dataset)?;
    let limit = limit.or(cfg.train.eval_functions);
    let mut out = Vec::new();
    for entry in manifest.runs.iter().filter(|r| r.status == RunStatus::Completed) {
        let model = load_model(&cfg, &dataset, entry, root)?;
        let errors = test_errors(&model, &dataset, limit)?;
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let seq = error_sequence(entry.variant, entry.seed, errors)?;
        if let Some(p) = &entry.errors {
            write_text(&root.join(p), &seq.to_csv())?;
        }
        out.push((entry.variant, entry.seed, mean));
    }
    Ok(out)
}
