//! Dense tensors, a recording tape with reverse-mode gradients, and a finite-difference checker.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport};
pub use params::ParameterStore;
pub use tape::{Gradients, NodeId, Tape, BCE_EPS, PRIMITIVES};
pub use tensor::{Real, Tensor};

