//! Physics-informed training: composite loss, adaptive weighting, AdamW with an
//! exponentially decaying learning rate, and timed training runs.

mod loss;
mod optimizer;
mod trainer;
pub mod weighting;

use serde::{Deserialize, Serialize};

pub use loss::{composite_loss, kernel_traces, LossTerms, MiniBatch};
pub use optimizer::{adamw_step, AdamState, AdamWConfig};
pub use trainer::{evaluate_test_error, test_errors, train_run, train_run_observed, CurvePoint, TrainRecord, Trainer};
pub use weighting::{
    ck_weights, normalize_clamped, BrdrWeighting, CkWeighting, Group, WeightState, Weighting, WeightingKind, GROUPS,
};

use crate::pde::{CollocationCounts, PdeKind};
use crate::{Error, Result};

/// Learning rate `1e-3 · 0.99^(t/500)`.
pub fn lr_at(t: usize) -> f64 {
    TrainConfig::default_for(PdeKind::Advection).lr_at(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Points per iteration across all loss groups.
    pub batch_size: usize,
    pub lr0: f64,
    pub transition_steps: f64,
    pub decay_rate: f64,
    pub adam: AdamWConfig,
    pub weighting: WeightingKind,
    pub weight_update_period: usize,
    pub eval_period: usize,
    pub seed: u64,
    /// Points per group for the CK trace estimate.
    pub ck_subsample: usize,
    pub brdr_decay: f64,
    pub brdr_clamp: (f64, f64),
    pub collocation: CollocationCounts,
    /// Use only the first `n` training functions.
    pub train_functions: Option<usize>,
    /// Evaluate on only the first `n` test functions.
    pub eval_functions: Option<usize>,
}

impl TrainConfig {
    pub fn default_for(kind: PdeKind) -> Self {
        let (iterations, batch_size, weighting) = match kind {
            PdeKind::Advection => (300_000, 10_000, WeightingKind::Brdr),
            PdeKind::DiffusionReaction => (120_000, 10_000, WeightingKind::Ck),
            PdeKind::Burgers => (200_000, 10_000, WeightingKind::Ck),
            PdeKind::Kdv => (200_000, 16_384, WeightingKind::Ck),
        };
        Self {
            iterations,
            batch_size,
            lr0: 1e-3,
            transition_steps: 500.0,
            decay_rate: 0.99,
            adam: AdamWConfig::default(),
            weighting,
            weight_update_period: 1000,
            eval_period: 1000,
            seed: 0,
            ck_subsample: 128,
            brdr_decay: 0.999,
            brdr_clamp: (1e-3, 1e3),
            collocation: CollocationCounts::default_for(kind),
            train_functions: None,
            eval_functions: None,
        }
    }

    /// `lr0 · decay^(t / transition)` with a continuous exponent.
    pub fn lr_at(&self, t: usize) -> f64 {
        self.lr0 * self.decay_rate.powf(t as f64 / self.transition_steps)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate < 1.0) {
            return bad("decay rate must lie in (0, 1)");
        }
        if !(self.transition_steps > 0.0) {
            return bad("transition steps must be positive");
        }
        if self.batch_size < 3 {
            return bad("batch size must be at least 3");
        }
        if self.weight_update_period == 0 || self.eval_period == 0 {
            return bad("weight-update and eval periods must be positive");
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps < 0.0 || a.weight_decay < 0.0 {
            return bad("invalid AdamW hyperparameters");
        }
        if !(self.brdr_decay > 0.0 && self.brdr_decay < 1.0) {
            return bad("BRDR decay must lie in (0, 1)");
        }
        let (lo, hi) = self.brdr_clamp;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return bad("BRDR clamp must satisfy 0 < lo ≤ 1 ≤ hi");
        }
        if self.ck_subsample == 0 {
            return bad("CK subsample must be positive");
        }
        if matches!(self.train_functions, Some(0)) || matches!(self.eval_functions, Some(0)) {
            return bad("function limits must be positive");
        }
        Ok(())
    }
}
