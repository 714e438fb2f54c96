//! Wilcoxon signed-rank two one-sided tests against a symmetric margin.
//!
//! Ranks come from `|d_i|` with average ranks for ties. The lower test gives
//! rank `i` a positive sign when `d_i > −Δ`; the upper test when `d_i < +Δ`.
//! Each p-value is `P(W ≥ w)` with `W` the positive rank sum under
//! independent fair signs. For `N ≤ EXACT_LIMIT` that tail is counted exactly
//! (ranks are half-integers, so the count runs over doubled ranks); above it a
//! normal approximation with continuity correction is used, whose variance
//! `Σ R_i² / 4` already carries the tie correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{average_ranks, differences};
use crate::{Error, Result};

pub const EXACT_LIMIT: usize = 20;
pub const MIN_PAIRS: usize = 5;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TostResult {
    pub w_lower: f64,
    pub w_upper: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub equivalent: bool,
    pub exact: bool,
}

/// `P(W ≥ w)` for the positive-rank sum over fair random signs on `ranks`.
pub fn signed_rank_tail(ranks: &[f64], w: f64) -> f64 {
    if ranks.len() <= EXACT_LIMIT {
        exact_tail(ranks, w)
    } else {
        normal_tail(ranks, w)
    }
}

fn doubled(r: f64) -> usize {
    let d = 2.0 * r;
    debug_assert!(d.fract() == 0.0 && d >= 0.0, "ranks must be half-integers");
    d as usize
}

fn exact_tail(ranks: &[f64], w: f64) -> f64 {
    let doubled_ranks: Vec<usize> = ranks.iter().map(|&r| doubled(r)).collect();
    let total: usize = doubled_ranks.iter().sum();
    // counts[s] = number of sign vectors with doubled positive sum s
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled_ranks {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let threshold = doubled(w);
    let hits: u64 = counts[threshold.min(total + 1)..].iter().sum();
    hits as f64 / (1u64 << ranks.len()) as f64
}

fn normal_tail(ranks: &[f64], w: f64) -> f64 {
    let mean = ranks.iter().sum::<f64>() / 2.0;
    let sd = (ranks.iter().map(|r| r * r).sum::<f64>() / 4.0).sqrt();
    let z = (w - 0.5 - mean) / sd;
    Normal::standard().sf(z)
}

/// Both one-sided tests on `d = variant − baseline` with margin `Δ`.
pub fn wilcoxon_tost(variant: &[f64], baseline: &[f64], margin: f64) -> Result<TostResult> {
    let d = differences(variant, baseline)?;
    if d.len() < MIN_PAIRS {
        return Err(Error::InsufficientData {
            needed: MIN_PAIRS,
            got: d.len(),
        });
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::Config(format!("equivalence margin must be positive, got {margin}")));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::UndefinedMetric("non-finite error difference".into()));
    }
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let sum_where = |pred: &dyn Fn(f64) -> bool| -> f64 {
        d.iter().zip(&ranks).filter(|(v, _)| pred(**v)).map(|(_, r)| r).sum()
    };
    let w_lower = sum_where(&|v| v > -margin);
    let w_upper = sum_where(&|v| v < margin);
    let p_lower = signed_rank_tail(&ranks, w_lower);
    let p_upper = signed_rank_tail(&ranks, w_upper);
    Ok(TostResult {
        w_lower,
        w_upper,
        p_lower,
        p_upper,
        equivalent: p_lower < SIGNIFICANCE && p_upper < SIGNIFICANCE,
        exact: d.len() <= EXACT_LIMIT,
    })
}
