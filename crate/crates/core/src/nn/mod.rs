//! A small reverse-mode autodiff kernel over dense 2-D tensors, with MLPs,
//! Adam, checkpoints and finite-difference gradient checks.

mod adam;
mod checkpoint;
mod gradcheck;
mod mlp;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{finite_diff_check, FD_FLOOR, FD_STEP};
pub use mlp::{polyak_update, Mlp, MlpConfig, OutputActivation, Parameterized};
pub use tape::{Activation, Gradients, ParamKey, Tape, Var};
pub use tensor::Tensor;
