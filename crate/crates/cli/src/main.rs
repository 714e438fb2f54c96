use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opnet_cli::compare::write_bundle;
use opnet_cli::config::key_reference;
use opnet_cli::runs::{evaluate_all, train_all, RunManifest, RunStatus, MANIFEST_FILE};
use opnet_cli::{exit, exit_code, ExperimentConfig, Stage};
use opnet_core::models::VariantKind;
use opnet_core::solvers::write_dataset;
use opnet_core::{Error, Result};

/// Physics-informed DeepONet variant experiments.
#[derive(Parser, Debug)]
#[command(name = "opnet", version)]
struct Cli {
    /// Experiment configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data seed for gen-data; the single training seed for train.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `jobs`).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the dataset named by the configuration.
    GenData,
    /// Train every (variant, seed) pair and write the run manifest.
    Train,
    /// Re-evaluate checkpoints on the test split.
    Eval {
        /// Run manifest written by `train` (default: <out>/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Evaluate on the first N test functions only.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Compare one variant against a baseline.
    Compare {
        /// Run manifest written by `train` (default: <out>/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Variant under test.
        #[arg(long)]
        variant: VariantKind,
        /// Reference variant.
        #[arg(long, default_value = "modified")]
        baseline: VariantKind,
        /// Equivalence margin in percent (default: a fifth of the smallest baseline error).
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Compare every trained variant against the configured baseline.
    Report {
        /// Run manifest written by `train` (default: <out>/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Equivalence margin in percent, shared by every comparison.
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Print the configuration key reference.
    Keys,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest_path(cli: &Cli, explicit: &Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    if let Some(out) = &cli.out {
        return Ok(out.join(MANIFEST_FILE));
    }
    Ok(load_config(cli)?.out.join(MANIFEST_FILE))
}

fn root_of(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn print_reports(reports: &[opnet_core::stats::ComparisonReport]) {
    println!(
        "{:<10} {:>8} {:>10} {:>11} {:>11} {:>5} {:>12} {:>9} {:>8}",
        "variant", "neg %", "margin", "p_lower", "p_upper", "eq", "median d", "glass", "rho"
    );
    for r in reports {
        println!(
            "{:<10} {:>8.2} {:>10.3e} {:>11.3e} {:>11.3e} {:>5} {:>12.3e} {:>9} {:>8.3}",
            r.variant,
            r.pct_negative,
            r.margin,
            r.p_lower,
            r.p_upper,
            if r.equivalent { "yes" } else { "no" },
            r.median_difference,
            r.glass_delta.map_or("-".into(), |g| format!("{g:.3}")),
            r.spearman_rho
        );
    }
}

fn run(cli: &Cli) -> std::result::Result<i32, (Stage, Error)> {
    match &cli.command {
        Command::Keys => {
            print!("{}", key_reference());
            Ok(exit::SUCCESS)
        }
        Command::GenData => {
            let stage = Stage::Generate;
            let mut cfg = load_config(cli).map_err(|e| (stage, e))?;
            if let Some(s) = cli.seed {
                cfg.data_seed = s;
            }
            let path = cfg.dataset_path();
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| (stage, e.into()))?;
            }
            let shape = cfg.shape;
            write_dataset(&cfg.generation(), &path).map_err(|e| (stage, e))?;
            println!(
                "wrote {} ({} train + {} test, {}x{} grid)",
                path.display(),
                shape.train,
                shape.test,
                shape.n_t,
                shape.n_x
            );
            Ok(exit::SUCCESS)
        }
        Command::Train => {
            let stage = Stage::Train;
            let mut cfg = load_config(cli).map_err(|e| (stage, e))?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let manifest = train_all(&cfg, |r| match r.status {
                RunStatus::Completed => println!(
                    "{}-s{}: {:.4}% mean error, {:.3e} s/iteration",
                    r.variant,
                    r.seed,
                    r.mean_error_percent.unwrap_or(f64::NAN),
                    r.seconds_per_iteration.unwrap_or(f64::NAN)
                ),
                RunStatus::Diverged => eprintln!(
                    "{}-s{}: {}",
                    r.variant,
                    r.seed,
                    r.message.as_deref().unwrap_or("diverged")
                ),
            })
            .map_err(|e| (stage, e))?;
            println!("manifest {}", cfg.out.join(MANIFEST_FILE).display());
            if manifest.runs.iter().any(|r| r.status == RunStatus::Diverged) {
                return Ok(exit::DIVERGENCE);
            }
            Ok(exit::SUCCESS)
        }
        Command::Eval { manifest, limit } => {
            let stage = Stage::Evaluate;
            let path = manifest_path(cli, manifest).map_err(|e| (stage, e))?;
            for (v, s, mean) in evaluate_all(&path, *limit).map_err(|e| (stage, e))? {
                println!("{v}-s{s}: {mean:.4}% mean error");
            }
            Ok(exit::SUCCESS)
        }
        Command::Compare {
            manifest,
            variant,
            baseline,
            margin,
        } => {
            let stage = Stage::Compare;
            let path = manifest_path(cli, manifest).map_err(|e| (stage, e))?;
            let m = RunManifest::load(&path).map_err(|e| (stage, e))?;
            let root = root_of(&path);
            let dir = root.join("compare").join(format!("{variant}_vs_{baseline}"));
            let reports = write_bundle(&m, &root, &[*variant], *baseline, *margin, &dir).map_err(|e| (stage, e))?;
            print_reports(&reports);
            println!("wrote {}", dir.display());
            Ok(exit::SUCCESS)
        }
        Command::Report { manifest, margin } => {
            let stage = Stage::Compare;
            let path = manifest_path(cli, manifest).map_err(|e| (stage, e))?;
            let m = RunManifest::load(&path).map_err(|e| (stage, e))?;
            let cfg = m.config().map_err(|e| (stage, e))?;
            let root = root_of(&path);
            let mut variants: Vec<VariantKind> = cfg.variants.clone();
            variants.retain(|v| !m.completed(*v).is_empty());
            let dir = root.join("report");
            let reports = write_bundle(&m, &root, &variants, cfg.baseline, *margin, &dir).map_err(|e| (stage, e))?;
            print_reports(&reports);
            println!("wrote {}", dir.display());
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err((stage, e)) => {
            eprintln!("error: {e}");
            exit_code(stage, &e)
        }
    };
    ExitCode::from(code as u8)
}
