//! Reverse-mode differentiation over dense 64-bit matrices.
//!
//! Values live on a [`Tape`]; every primitive records how to push an
//! upstream gradient back to its inputs. [`Tape::backward`] walks the
//! record once in reverse.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
