//! Branch/trunk operator models for the eight input wirings.

pub mod batched;
pub mod embedding;
pub mod fourier;
mod mixed;
pub mod operator;
pub mod sample;
pub mod variant;

pub use batched::{BatchTrace, FunctionTable, PointBatch};
pub use embedding::{embed_coordinates, Embedding};
pub use fourier::{fourier_coeffs, one_period};
pub use operator::{modified_forward, operator_forward, Architecture, InputLayout, OperatorModel};
pub use sample::{FunctionSample, UniformGrid};
pub use variant::{default_fourier_modes, EmbeddingMode, EmbeddingSpec, VariantKind, VariantSpec};
