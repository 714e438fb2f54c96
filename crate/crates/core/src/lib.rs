//! Physics-informed operator learning with cross-conditioned DeepONet variants.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense tanh networks, Taylor-mode input jets and reverse-mode
//!   parameter gradients.
//! - [`models`]: the eight branch/trunk wirings, Fourier embeddings and the
//!   batched operator evaluation used for training.
//! - [`pde`]: the four benchmark problems, their residuals and collocation sampling.
//! - [`solvers`]: input-function generators, reference solvers and the dataset format.
//! - [`training`]: AdamW with the exponential schedule, CK/BRDR loss weighting
//!   and the training loop.
//! - [`stats`]: relative errors, summaries and the paired equivalence analysis.

pub mod autodiff;
pub mod error;
pub mod fsio;
pub mod models;
pub mod pde;
pub mod rng;
pub mod solvers;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
