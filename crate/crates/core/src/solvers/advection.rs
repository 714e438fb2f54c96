use ndarray::Array2;

use super::{SolverMeta, SolverOutput};
use crate::models::UniformGrid;
use crate::pde::{advection_initial, inflow};
use crate::{Error, Result};

/// Largest Courant number allowed for the internal steps.
pub const MAX_CFL: f64 = 0.5;

/// Substeps per output interval are capped so a pathological velocity field
/// fails fast instead of running forever.
const MAX_SUBSTEPS: usize = 1_000_000;

/// Solves `s_t + u(x) s_x = 0` on `[0, 1]²` with `s(0, x) = sin πx` and
/// inflow `s(t, 0) = sin(πt/2)`.
///
/// `u` is given on `sensor_grid` and linearly interpolated onto the `n_x`
/// point solution grid.
pub fn solve_advection(u: &[f64], sensor_grid: &UniformGrid, n_t: usize, n_x: usize) -> Result<SolverOutput> {
    if u.len() != sensor_grid.points {
        return Err(Error::Dimension {
            context: "advection velocity",
            expected: sensor_grid.points,
            got: u.len(),
        });
    }
    let x_axis = UniformGrid::new(0.0, 1.0, n_x);
    let velocity: Vec<f64> = x_axis.coords().iter().map(|&x| sensor_grid.interpolate(u, x).0).collect();
    solve_advection_with(&velocity, n_t, advection_initial, inflow)
}

/// Variable-coefficient Lax–Wendroff on the `velocity.len()` point grid over
/// `[0, 1]`, with arbitrary initial profile and inflow.
///
/// Update (non-conservative form, centred differences):
/// `s ← s − dt·u·D₀s + (dt²/2)·u·D₊(u_{i−½} D₋s)`, inflow Dirichlet on the left
/// and linear extrapolation on the right.
pub fn solve_advection_with(
    velocity: &[f64],
    n_t: usize,
    initial: impl Fn(f64) -> f64,
    inflow: impl Fn(f64) -> f64,
) -> Result<SolverOutput> {
    let n_x = velocity.len();
    if n_x < 3 || n_t < 2 {
        return Err(Error::Config("advection grid needs n_x ≥ 3 and n_t ≥ 2".into()));
    }
    if velocity.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Generation("advection velocity must be finite and strictly positive".into()));
    }
    let dx = 1.0 / (n_x - 1) as f64;
    let dt_out = 1.0 / (n_t - 1) as f64;
    let u_max = velocity.iter().copied().fold(0.0, f64::max);
    let substeps = (u_max * dt_out / (MAX_CFL * dx) * (1.0 - 1e-12)).ceil().max(1.0);
    if !substeps.is_finite() || substeps > MAX_SUBSTEPS as f64 {
        return Err(Error::Generation(format!(
            "no admissible CFL substepping for max velocity {u_max}"
        )));
    }
    let substeps = substeps as usize;
    let dt = dt_out / substeps as f64;

    let half: Vec<f64> = velocity.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let a = dt / (2.0 * dx);
    let b = dt * dt / (2.0 * dx * dx);

    let grid = UniformGrid::new(0.0, 1.0, n_x);
    let mut s: Vec<f64> = grid.coords().iter().map(|&x| initial(x)).collect();
    let mut next = s.clone();
    let mut solution = Array2::zeros((n_t, n_x));
    solution.row_mut(0).assign(&ndarray::ArrayView1::from(&s));

    for out in 1..n_t {
        for sub in 0..substeps {
            for i in 1..n_x - 1 {
                let ui = velocity[i];
                let central = s[i + 1] - s[i - 1];
                let flux = half[i] * (s[i + 1] - s[i]) - half[i - 1] * (s[i] - s[i - 1]);
                next[i] = s[i] - a * ui * central + b * ui * flux;
            }
            let t_new = (out - 1) as f64 * dt_out + (sub + 1) as f64 * dt;
            next[0] = inflow(t_new);
            next[n_x - 1] = 2.0 * next[n_x - 2] - next[n_x - 3];
            std::mem::swap(&mut s, &mut next);
        }
        solution.row_mut(out).assign(&ndarray::ArrayView1::from(&s));
    }
    // the last substep targets t = out·dt_out up to rounding; pin the inflow exactly
    for out in 1..n_t {
        solution[[out, 0]] = inflow(out as f64 * dt_out);
    }
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Generation("advection solution is not finite".into()));
    }
    Ok(SolverOutput {
        solution,
        meta: SolverMeta {
            spectral_size: None,
            internal_dt: dt,
            substeps,
            max_imaginary: 0.0,
        },
    })
}
