//! Adaptive loss weighting.
//!
//! Two schemes sit behind the [`Weighting`] trait: group-level conjugate-kernel
//! balancing (CK) and per-point balanced residual decay rates (BRDR). Both keep
//! their weights strictly positive with mean one after every update.

use serde::{Deserialize, Serialize};

/// Number of loss groups.
pub const GROUPS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Residual = 0,
    Initial = 1,
    Boundary = 2,
}

impl Group {
    pub const ALL: [Group; GROUPS] = [Group::Residual, Group::Initial, Group::Boundary];

    pub fn name(self) -> &'static str {
        match self {
            Group::Residual => "residual",
            Group::Initial => "initial",
            Group::Boundary => "boundary",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightingKind {
    Ck,
    Brdr,
}

impl WeightingKind {
    pub fn name(self) -> &'static str {
        match self {
            WeightingKind::Ck => "ck",
            WeightingKind::Brdr => "brdr",
        }
    }
}

impl std::str::FromStr for WeightingKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ck" => Ok(WeightingKind::Ck),
            "brdr" => Ok(WeightingKind::Brdr),
            _ => Err(crate::Error::Config(format!("unknown weighting scheme '{s}'"))),
        }
    }
}

/// Current weights: one per group and, for per-point schemes, one per pool entry.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightState {
    pub group: [f64; GROUPS],
    /// Empty for group-level schemes.
    pub point: [Vec<f64>; GROUPS],
    pub last_update: Option<usize>,
}

impl WeightState {
    pub fn uniform() -> Self {
        Self {
            group: [1.0; GROUPS],
            point: Default::default(),
            last_update: None,
        }
    }

    /// Weight of pool entry `index` of `group` (1 when the scheme has no point weights).
    #[inline]
    pub fn point_weight(&self, group: Group, index: Option<usize>) -> f64 {
        match index {
            Some(i) if !self.point[group as usize].is_empty() => self.point[group as usize][i],
            _ => 1.0,
        }
    }
}

/// A loss-weighting scheme driven by the training loop.
pub trait Weighting: Send {
    fn state(&self) -> &WeightState;

    /// Squared terms of the pool entries used at the current iteration.
    fn observe(&mut self, _group: Group, _indices: &[usize], _squared: &[f64]) {}

    /// Whether [`Weighting::update`] wants per-group kernel traces.
    fn needs_traces(&self) -> bool {
        false
    }

    /// Recomputes the weights; `traces[g]` is the mean squared parameter-gradient
    /// norm of the group's per-point terms when requested.
    fn update(&mut self, iteration: usize, traces: Option<&[f64; GROUPS]>);
}

/// Scales `values` by the factor `c` for which `mean(clamp(c·v, lo, hi)) = 1`,
/// so the result is within `[lo, hi]` and has mean one.
pub fn normalize_clamped(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let clean: Vec<f64> = values
        .iter()
        .map(|&v| if v.is_finite() && v > 0.0 { v } else { 1.0 })
        .collect();
    let mean_at = |c: f64| clean.iter().map(|v| (c * v).clamp(lo, hi)).sum::<f64>() / clean.len() as f64;
    // mean_at is non-decreasing in c; bracket the root in log space
    let base = clean.len() as f64 / clean.iter().sum::<f64>();
    let (mut a, mut b) = (base.ln(), base.ln());
    while mean_at(a.exp()) > 1.0 {
        a -= 1.0;
    }
    while mean_at(b.exp()) < 1.0 {
        b += 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mean_at(mid.exp()) < 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let c = (0.5 * (a + b)).exp();
    let mut out: Vec<f64> = clean.iter().map(|v| (c * v).clamp(lo, hi)).collect();
    let m = out.iter().sum::<f64>() / out.len() as f64;
    for o in out.iter_mut() {
        *o = (*o / m).clamp(lo, hi);
    }
    out
}

/// Group weights `λ_g ∝ Σ T / (G·T_g)` over active groups, mean one. Groups
/// with `T_g = 0` (or non-finite) keep their previous weight.
pub fn ck_weights(traces: &[f64; GROUPS], active: &[bool; GROUPS], previous: &[f64; GROUPS]) -> [f64; GROUPS] {
    let groups: Vec<usize> = (0..GROUPS).filter(|&g| active[g]).collect();
    let total: f64 = groups.iter().map(|&g| traces[g]).filter(|t| t.is_finite() && *t > 0.0).sum();
    let mut raw = *previous;
    for &g in &groups {
        let t = traces[g];
        if t.is_finite() && t > 0.0 {
            raw[g] = total / (groups.len() as f64 * t);
        }
    }
    let mean = groups.iter().map(|&g| raw[g]).sum::<f64>() / groups.len().max(1) as f64;
    let mut out = [1.0; GROUPS];
    for &g in &groups {
        out[g] = raw[g] / mean;
    }
    out
}

/// Conjugate-kernel group balancing.
pub struct CkWeighting {
    state: WeightState,
    active: [bool; GROUPS],
}

impl CkWeighting {
    pub fn new(active: [bool; GROUPS]) -> Self {
        Self {
            state: WeightState::uniform(),
            active,
        }
    }
}

impl Weighting for CkWeighting {
    fn state(&self) -> &WeightState {
        &self.state
    }

    fn needs_traces(&self) -> bool {
        true
    }

    fn update(&mut self, iteration: usize, traces: Option<&[f64; GROUPS]>) {
        if let Some(t) = traces {
            self.state.group = ck_weights(t, &self.active, &self.state.group);
        }
        self.state.last_update = Some(iteration);
    }
}

/// Balanced residual decay rates: per-point EMA of squared terms; points whose
/// term decays slowly relative to its history receive more weight.
pub struct BrdrWeighting {
    state: WeightState,
    ema: [Vec<f64>; GROUPS],
    latest: [Vec<f64>; GROUPS],
    seen: [Vec<bool>; GROUPS],
    decay: f64,
    clamp: (f64, f64),
}

impl BrdrWeighting {
    /// `pool_sizes[g]` entries per group; EMA decay and clamp interval.
    pub fn new(pool_sizes: [usize; GROUPS], decay: f64, clamp: (f64, f64)) -> Self {
        let mut state = WeightState::uniform();
        for g in 0..GROUPS {
            state.point[g] = vec![1.0; pool_sizes[g]];
        }
        Self {
            state,
            ema: pool_sizes.map(|n| vec![0.0; n]),
            latest: pool_sizes.map(|n| vec![0.0; n]),
            seen: pool_sizes.map(|n| vec![false; n]),
            decay,
            clamp,
        }
    }

    pub fn ema(&self, group: Group) -> &[f64] {
        &self.ema[group as usize]
    }

    /// Decay-rate ratios `ρ_i = r_i² / r̄_i` (1 for entries never seen or with zero history).
    pub fn rates(&self, group: Group) -> Vec<f64> {
        let g = group as usize;
        (0..self.ema[g].len())
            .map(|i| {
                if self.seen[g][i] && self.ema[g][i] > 0.0 {
                    self.latest[g][i] / self.ema[g][i]
                } else {
                    1.0
                }
            })
            .collect()
    }
}

impl Weighting for BrdrWeighting {
    fn state(&self) -> &WeightState {
        &self.state
    }

    fn observe(&mut self, group: Group, indices: &[usize], squared: &[f64]) {
        let g = group as usize;
        for (&i, &r2) in indices.iter().zip(squared) {
            if !r2.is_finite() {
                continue;
            }
            if self.seen[g][i] {
                self.ema[g][i] = self.decay * self.ema[g][i] + (1.0 - self.decay) * r2;
            } else {
                self.ema[g][i] = r2;
                self.seen[g][i] = true;
            }
            self.latest[g][i] = r2;
        }
    }

    fn update(&mut self, iteration: usize, _traces: Option<&[f64; GROUPS]>) {
        for group in Group::ALL {
            let g = group as usize;
            if self.ema[g].is_empty() {
                continue;
            }
            let rho = self.rates(group);
            let mean = rho.iter().sum::<f64>() / rho.len() as f64;
            let ratio: Vec<f64> = rho.iter().map(|r| r / mean).collect();
            self.state.point[g] = normalize_clamped(&ratio, self.clamp.0, self.clamp.1);
        }
        self.state.last_update = Some(iteration);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn ck_equal_traces_give_unit_weights() {
        let w = ck_weights(&[3.0, 3.0, 3.0], &[true; 3], &[1.0; 3]);
        assert_eq!(w, [1.0; 3]);
    }

    #[test]
    fn ck_two_group_closed_form() {
        let w = ck_weights(&[4.0, 1.0, 0.0], &[true, true, false], &[1.0; 3]);
        assert!((w[0] - 0.4).abs() < 1e-15 && (w[1] - 1.6).abs() < 1e-15);
        let scaled = ck_weights(&[4e6, 1e6, 0.0], &[true, true, false], &[1.0; 3]);
        assert!((scaled[0] - w[0]).abs() < 1e-15 && (scaled[1] - w[1]).abs() < 1e-15);
    }

    #[test]
    fn ck_zero_trace_keeps_previous() {
        let w = ck_weights(&[2.0, 0.0, 2.0], &[true; 3], &[1.0, 0.5, 1.0]);
        assert!((mean(&w) - 1.0).abs() < 1e-15);
        // group 1 kept its previous raw weight relative to the others
        assert!(w[1] < w[0]);
    }

    #[test]
    fn brdr_identical_histories_give_unit_weights() {
        let mut b = BrdrWeighting::new([4, 0, 0], 0.999, (1e-3, 1e3));
        for k in 0..50 {
            let r2 = 1.0 / (1.0 + k as f64);
            b.observe(Group::Residual, &[0, 1, 2, 3], &[r2; 4]);
        }
        b.update(50, None);
        for w in &b.state().point[0] {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn brdr_fast_decaying_point_is_down_weighted() {
        let mut b = BrdrWeighting::new([2, 0, 0], 0.9, (1e-3, 1e3));
        let (mut slow, mut fast) = (1.0, 1.0);
        for _ in 0..30 {
            b.observe(Group::Residual, &[0, 1], &[slow, fast]);
            slow *= 0.9;
            fast *= 0.81;
        }
        b.update(30, None);
        let w = &b.state().point[0];
        assert!(w[1] < 1.0 && w[0] > 1.0, "{w:?}");
        assert!((mean(w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brdr_weights_stay_clamped_under_spikes() {
        let n = 10_000;
        let mut b = BrdrWeighting::new([n, 0, 0], 0.999, (1e-3, 1e3));
        let idx: Vec<usize> = (0..n).collect();
        b.observe(Group::Residual, &idx, &vec![1.0; n]);
        let mut spike = vec![1e-12; n];
        spike[7] = 1e30;
        b.observe(Group::Residual, &idx, &spike);
        b.update(1, None);
        let w = &b.state().point[0];
        assert!(w.iter().all(|&x| (1e-3 * (1.0 - 1e-12)..=1e3 * (1.0 + 1e-12)).contains(&x)));
        assert!((mean(w) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_clamped_properties() {
        let w = normalize_clamped(&[1.0, 2.0, 3.0, 4.0], 1e-3, 1e3);
        assert!((mean(&w) - 1.0).abs() < 1e-14);
        assert!((w[1] / w[0] - 2.0).abs() < 1e-12);
        let w = normalize_clamped(&[0.0, f64::NAN, 5.0], 1e-3, 1e3);
        assert!(w.iter().all(|x| x.is_finite() && *x > 0.0));
    }
}
