use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PdeKind, PdeSpec};
use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

/// Points allocated per input function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub initial: usize,
    pub boundary: usize,
    /// Uniform random residual points (ignored when `residual_grid` is set).
    pub residual: usize,
    /// Fixed `(n_t, n_x)` residual grid.
    pub residual_grid: Option<(usize, usize)>,
}

impl CollocationCounts {
    pub fn default_for(kind: PdeKind) -> Self {
        match kind {
            PdeKind::Advection => Self {
                initial: 101,
                boundary: 101,
                residual: 2500,
                residual_grid: None,
            },
            PdeKind::DiffusionReaction => Self {
                initial: 101,
                boundary: 101,
                residual: 100,
                residual_grid: None,
            },
            PdeKind::Burgers => Self {
                initial: 101,
                boundary: 0,
                residual: 2500,
                residual_grid: None,
            },
            PdeKind::Kdv => Self {
                initial: 257,
                boundary: 0,
                residual: 101 * 257,
                residual_grid: Some((101, 257)),
            },
        }
    }

    pub fn residual_per_function(&self) -> usize {
        match self.residual_grid {
            Some((nt, nx)) => nt * nx,
            None => self.residual,
        }
    }
}

/// Collocation points of all three term types, with per-point weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CollocationBatch {
    /// `(function, t, x)`
    pub residual: Vec<(usize, f64, f64)>,
    /// `(function, x)`
    pub initial: Vec<(usize, f64)>,
    /// `(function, t)`
    pub boundary: Vec<(usize, f64)>,
    pub residual_weights: Vec<f64>,
    pub initial_weights: Vec<f64>,
    pub boundary_weights: Vec<f64>,
}

/// Draws a uniform sample from the open interval `(0, 1)`.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}

/// `count` residual points uniform in the open domain `(0,1) × (0,L)` for
/// functions drawn uniformly from `0..functions`.
pub fn sample_residual_points<R: Rng + ?Sized>(
    spec: &PdeSpec,
    functions: usize,
    count: usize,
    rng: &mut R,
) -> Vec<(usize, f64, f64)> {
    (0..count)
        .map(|_| {
            let f = rng.random_range(0..functions);
            let t = open_unit(rng);
            let x = open_unit(rng) * spec.length;
            (f, t, x)
        })
        .collect()
}

/// Collocation points for `functions` input functions.
///
/// Residual points are uniform in the open domain, or a cell-centred
/// `n_t × n_x` grid when `residual_grid` is set (strictly interior either
/// way). Initial points lie on a uniform grid over `[0, L]` (the sensor grid
/// under the default counts). Boundary times are uniform in `(0, 1)`.
pub fn sample_collocation(
    spec: &PdeSpec,
    counts: &CollocationCounts,
    functions: usize,
    seed: u64,
) -> Result<CollocationBatch> {
    if functions == 0 || counts.initial < 2 || counts.residual_per_function() == 0 {
        return Err(Error::Config("collocation counts must be positive".into()));
    }
    let has_boundary = !spec.kind.is_periodic();
    if has_boundary && counts.boundary == 0 {
        return Err(Error::Config(format!("{} needs boundary points", spec.kind)));
    }
    let mut rng = stream_rng(seed, stream::COLLOCATION);
    let mut batch = CollocationBatch::default();
    let l = spec.length;
    for f in 0..functions {
        match counts.residual_grid {
            Some((nt, nx)) => {
                for i in 0..nt {
                    for j in 0..nx {
                        let t = (i as f64 + 0.5) / nt as f64;
                        let x = (j as f64 + 0.5) * l / nx as f64;
                        batch.residual.push((f, t, x));
                    }
                }
            }
            None => {
                for _ in 0..counts.residual {
                    let t = open_unit(&mut rng);
                    let x = open_unit(&mut rng) * l;
                    batch.residual.push((f, t, x));
                }
            }
        }
        for i in 0..counts.initial {
            let x = if i + 1 == counts.initial {
                l
            } else {
                i as f64 * l / (counts.initial - 1) as f64
            };
            batch.initial.push((f, x));
        }
        if has_boundary {
            for _ in 0..counts.boundary {
                batch.boundary.push((f, open_unit(&mut rng)));
            }
        }
    }
    batch.residual_weights = vec![1.0; batch.residual.len()];
    batch.initial_weights = vec![1.0; batch.initial.len()];
    batch.boundary_weights = vec![1.0; batch.boundary.len()];
    Ok(batch)
}
