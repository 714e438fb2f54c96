//! Error metrics and the paired comparison of two models' error sequences.

mod report;
mod tost;

use serde::{Deserialize, Serialize};

pub use report::{compare, equivalence_margin, ComparisonReport, ErrorSequence, Verdict};
pub use tost::{signed_rank_tail, wilcoxon_tost, TostResult, EXACT_LIMIT, MIN_PAIRS, SIGNIFICANCE};

use crate::{Error, Result};

/// `100 · ‖pred − reference‖₂ / ‖reference‖₂` over all entries.
pub fn rel_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Dimension {
            context: "relative L2 error",
            expected: reference.len(),
            got: pred.len(),
        });
    }
    let (num, den) = pred
        .iter()
        .zip(reference)
        .fold((0.0, 0.0), |(n, d), (p, r)| (n + (p - r) * (p - r), d + r * r));
    if den == 0.0 || !den.is_finite() {
        return Err(Error::UndefinedMetric("reference has zero or non-finite norm".into()));
    }
    Ok(100.0 * (num / den).sqrt())
}

/// Pooled descriptive statistics; `std` is the population deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile of sorted data, interpolating linearly between the closest ranks
/// (position `p·(n−1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, 0.5))
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> Result<f64> {
    let m = median(values)?;
    median(&values.iter().map(|v| (v - m).abs()).collect::<Vec<_>>())
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let constant = sorted[0] == sorted[sorted.len() - 1];
    let mean = if constant { sorted[0] } else { values.iter().sum::<f64>() / n };
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Summary {
        count: values.len(),
        mean,
        std: var.sqrt(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// Percentage of strictly negative entries.
pub fn pct_negative(d: &[f64]) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(100.0 * d.iter().filter(|&&v| v < 0.0).count() as f64 / d.len() as f64)
}

/// 1-based ranks in ascending order; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn paired_len(a: &[f64], b: &[f64]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Pairing(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    Ok(a.len())
}

/// Element-wise `variant − baseline`.
pub fn differences(variant: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
    paired_len(variant, baseline)?;
    Ok(variant.iter().zip(baseline).map(|(v, b)| v - b).collect())
}

/// Nonparametric effect size `median(d) / MAD(baseline)`.
pub fn glass_delta(variant: &[f64], baseline: &[f64]) -> Result<f64> {
    let d = differences(variant, baseline)?;
    let spread = mad(baseline)?;
    if spread == 0.0 {
        return Err(Error::DegenerateDispersion);
    }
    Ok(median(&d)? / spread)
}

/// Pearson correlation of the average-rank sequences.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = paired_len(a, b)?;
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
