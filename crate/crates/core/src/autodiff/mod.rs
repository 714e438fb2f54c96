//! Dense tanh networks in 64-bit arithmetic with input jets up to third order
//! and reverse-mode parameter gradients.

pub mod batch;
pub mod checkpoint;
pub mod jet;
pub mod network;
pub mod params;
pub mod tape;

pub use batch::{JetBlock, NetworkTrace, SplitInput};
pub use checkpoint::{checkpoint_bytes, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use jet::{FieldJet, InputJet, COMPONENTS};
pub use network::{Activation, DenseNetwork, Layer};
pub use params::{ModelParams, ParamGradient};
pub use tape::{param_gradient, ParamVars, Tape, Var};
