//! Input-function generators, reference solvers and the dataset format.
//!
//! Advection uses variable-coefficient Lax–Wendroff with CFL substepping,
//! diffusion–reaction Crank–Nicolson with an explicit trapezoidal source, and
//! the periodic problems a dealiased Fourier ETDRK4 integrator on a fine grid
//! that is reduced to the stored grid afterwards.

mod advection;
mod dataset;
mod diffusion;
mod generate;
mod grf;
mod spectral;

use ndarray::Array2;

pub use advection::{solve_advection, solve_advection_with, MAX_CFL};
pub use dataset::{DataSplit, Dataset, DatasetShape, Split, DATASET_MAGIC, DATASET_VERSION};
pub use diffusion::{solve_diffusion_reaction, DEFAULT_DT as DIFFUSION_DT};
pub use generate::{generate_dataset, generate_sample, write_dataset, GenerationConfig, InputFamily};
pub use grf::{
    draw_periodic_field, first_harmonic, kdv_coefficients, kdv_initial_condition, positive_velocity, rbf_covariance,
    sample_grf, spectral_variance, GrfSpec, RbfSampler, TrigPolynomial,
};
pub use spectral::{solve_spectral_etdrk4, Downsample, SpectralKind, SpectralSettings, BLOW_UP, CONTOUR_POINTS};

/// Fine-solver bookkeeping attached to every solution.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverMeta {
    /// Spectral grid size `s` (spectral solvers only).
    pub spectral_size: Option<usize>,
    /// Internal time step actually used.
    pub internal_dt: f64,
    /// Internal steps per stored time level.
    pub substeps: usize,
    /// Largest imaginary residue seen after inverse transforms.
    pub max_imaginary: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOutput {
    /// `[n_t × n_x]`
    pub solution: Array2<f64>,
    pub meta: SolverMeta,
}
