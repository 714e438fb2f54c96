use ndarray::Array2;

use super::{SolverMeta, SolverOutput};
use crate::models::UniformGrid;
use crate::{Error, Result};

/// Default internal step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Solves `s_t = D s_xx + k s² + u(x)` on `[0, 1]²` with zero initial and
/// Dirichlet-zero boundary data.
///
/// Diffusion is Crank–Nicolson; the reaction and source terms use Heun's
/// explicit trapezoidal rule (predictor then corrector, both through the same
/// tridiagonal Crank–Nicolson operator).
pub fn solve_diffusion_reaction(
    u: &[f64],
    sensor_grid: &UniformGrid,
    diffusion: f64,
    reaction: f64,
    n_t: usize,
    n_x: usize,
    dt_internal: f64,
) -> Result<SolverOutput> {
    if u.len() != sensor_grid.points {
        return Err(Error::Dimension {
            context: "diffusion-reaction source",
            expected: sensor_grid.points,
            got: u.len(),
        });
    }
    if n_x < 3 || n_t < 2 || !(dt_internal > 0.0) || !(diffusion >= 0.0) || !reaction.is_finite() {
        return Err(Error::Config("invalid diffusion-reaction solver settings".into()));
    }
    let grid = UniformGrid::new(0.0, 1.0, n_x);
    let source: Vec<f64> = grid.coords().iter().map(|&x| sensor_grid.interpolate(u, x).0).collect();
    let dx = grid.spacing();
    let dt_out = 1.0 / (n_t - 1) as f64;
    let substeps = (dt_out / dt_internal - 1e-9).ceil().max(1.0) as usize;
    let dt = dt_out / substeps as f64;

    // interior unknowns 1..n_x-1
    let n = n_x - 2;
    let r = diffusion * dt / (dx * dx);
    let lower = -0.5 * r;
    let diag = 1.0 + r;
    let tri = Tridiagonal::new(n, lower, diag, lower);

    let react = |s: &[f64], i: usize| reaction * s[i] * s[i] + source[i];
    let mut s = vec![0.0; n_x];
    let mut predictor = vec![0.0; n_x];
    let mut explicit = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut solution = Array2::zeros((n_t, n_x));

    for out in 1..n_t {
        for _ in 0..substeps {
            for i in 1..n_x - 1 {
                explicit[i - 1] = s[i] + 0.5 * r * (s[i + 1] - 2.0 * s[i] + s[i - 1]);
            }
            for i in 1..n_x - 1 {
                rhs[i - 1] = explicit[i - 1] + dt * react(&s, i);
            }
            tri.solve_into(&rhs, &mut predictor[1..n_x - 1]);
            for i in 1..n_x - 1 {
                rhs[i - 1] = explicit[i - 1] + 0.5 * dt * (react(&s, i) + react(&predictor, i));
            }
            tri.solve_into(&rhs, &mut s[1..n_x - 1]);
        }
        solution.row_mut(out).assign(&ndarray::ArrayView1::from(&s));
    }
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Generation("diffusion-reaction solution is not finite".into()));
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

/// Constant-coefficient tridiagonal system solved by the Thomas algorithm,
/// with the forward sweep factors cached.
struct Tridiagonal {
    lower: f64,
    upper_mod: Vec<f64>,
    pivot: Vec<f64>,
}

impl Tridiagonal {
    fn new(n: usize, lower: f64, diag: f64, upper: f64) -> Self {
        let mut upper_mod = vec![0.0; n];
        let mut pivot = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let p = diag - lower * prev;
            pivot[i] = p;
            upper_mod[i] = upper / p;
            prev = upper_mod[i];
        }
        Self { lower, upper_mod, pivot }
    }

    fn solve_into(&self, rhs: &[f64], out: &mut [f64]) {
        let n = rhs.len();
        let mut prev = 0.0;
        for i in 0..n {
            out[i] = (rhs[i] - self.lower * prev) / self.pivot[i];
            prev = out[i];
        }
        for i in (0..n - 1).rev() {
            out[i] -= self.upper_mod[i] * out[i + 1];
        }
    }
}
