//! Statistical comparison of finished runs and plot-ready summaries.
//!
//! Output files, all CSV with a header row unless noted:
//!
//! * `comparisons.csv` / `comparisons.json`: one [`ComparisonReport`] per variant
//! * `summary.csv`: model, runs, cases, mean, std, q1, median, q3,
//!   seconds_per_iteration, time_ratio
//! * `violin.csv`: model, min, q1, median, q3, max
//! * `scatter.csv`: model, time_ratio, mean_error_percent
//! * `curves.csv`: model, seed, iteration, seconds, mean_rel_l2_percent

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use opnet_core::fsio::write_atomic;
use opnet_core::models::VariantKind;
use opnet_core::stats::{compare, summarize, ComparisonReport, ErrorSequence, Summary};
use opnet_core::training::TrainRecord;
use opnet_core::{Error, Result};

use crate::runs::RunManifest;

/// Pooled results of one variant across its completed seeds.
#[derive(Clone, Debug)]
pub struct ModelResults {
    pub variant: VariantKind,
    pub errors: ErrorSequence,
    pub summary: Summary,
    pub seconds_per_iteration: f64,
    pub curves: Vec<(u64, String)>,
    pub runs: usize,
}

pub fn load_results(manifest: &RunManifest, root: &Path, variant: VariantKind) -> Result<ModelResults> {
    let runs = manifest.completed(variant);
    if runs.is_empty() {
        return Err(Error::Pairing(format!("no completed runs for variant {variant}")));
    }
    let mut parts = Vec::new();
    let mut curves = Vec::new();
    let mut time = 0.0;
    for r in &runs {
        let path = r.errors.as_ref().ok_or_else(|| Error::Format("completed run lacks errors".into()))?;
        parts.push(ErrorSequence::from_csv(variant.to_string(), &fs::read_to_string(root.join(path))?)?);
        if let Some(c) = &r.curve {
            curves.push((r.seed, fs::read_to_string(root.join(c))?));
        }
        time += r.seconds_per_iteration.unwrap_or(0.0);
    }
    let errors = ErrorSequence::pooled(variant.to_string(), &parts)?;
    let summary = summarize(&errors.errors)?;
    Ok(ModelResults {
        variant,
        errors,
        summary,
        seconds_per_iteration: time / runs.len() as f64,
        curves,
        runs: runs.len(),
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        f64::NAN
    }
}

pub fn summary_csv(models: &[ModelResults], baseline: &ModelResults) -> String {
    let mut s = String::from("model,runs,cases,mean,std,q1,median,q3,seconds_per_iteration,time_ratio\n");
    for m in models {
        let x = &m.summary;
        let _ = writeln!(
            s,
            "{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6}",
            m.variant,
            m.runs,
            x.count,
            x.mean,
            x.std,
            x.q1,
            x.median,
            x.q3,
            m.seconds_per_iteration,
            ratio(m.seconds_per_iteration, baseline.seconds_per_iteration)
        );
    }
    s
}

pub fn violin_csv(models: &[ModelResults]) -> String {
    let mut s = String::from("model,min,q1,median,q3,max\n");
    for m in models {
        let x = &m.summary;
        let _ = writeln!(s, "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}", m.variant, x.min, x.q1, x.median, x.q3, x.max);
    }
    s
}

pub fn scatter_csv(models: &[ModelResults], baseline: &ModelResults) -> String {
    let mut s = String::from("model,time_ratio,mean_error_percent\n");
    for m in models {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6e}",
            m.variant,
            ratio(m.seconds_per_iteration, baseline.seconds_per_iteration),
            m.summary.mean
        );
    }
    s
}

pub fn curves_csv(models: &[ModelResults]) -> Result<String> {
    let mut s = String::from("model,seed,iteration,seconds,mean_rel_l2_percent\n");
    for m in models {
        for (seed, text) in &m.curves {
            for p in TrainRecord::from_csv(text)? {
                let _ = writeln!(
                    s,
                    "{},{},{},{:.6},{:.6e}",
                    m.variant, seed, p.iteration, p.seconds, p.mean_rel_l2_percent
                );
            }
        }
    }
    Ok(s)
}

/// Compares each of `variants` against `baseline` and writes the full bundle
/// into `dir`. Returns the reports in `variants` order.
pub fn write_bundle(
    manifest: &RunManifest,
    root: &Path,
    variants: &[VariantKind],
    baseline: VariantKind,
    margin: Option<f64>,
    dir: &Path,
) -> Result<Vec<ComparisonReport>> {
    let base = load_results(manifest, root, baseline)?;
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for &v in variants {
        let m = if v == baseline { base.clone() } else { load_results(manifest, root, v)? };
        reports.push(compare(&m.errors, &base.errors, margin)?);
        models.push(m);
    }
    if !variants.contains(&baseline) {
        models.push(base.clone());
    }

    fs::create_dir_all(dir)?;
    let put = |name: &str, text: String| -> Result<PathBuf> {
        let p = dir.join(name);
        write_atomic(&p, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?))?;
        Ok(p)
    };
    let mut csv = format!("{}\n", ComparisonReport::CSV_HEADER);
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    put("comparisons.csv", csv)?;
    put(
        "comparisons.json",
        serde_json::to_string_pretty(&reports).expect("reports serialize"),
    )?;
    put("summary.csv", summary_csv(&models, &base))?;
    put("violin.csv", violin_csv(&models))?;
    put("scatter.csv", scatter_csv(&models, &base))?;
    put("curves.csv", curves_csv(&models)?)?;
    Ok(reports)
}
