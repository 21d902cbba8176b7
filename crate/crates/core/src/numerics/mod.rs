//! Dense tensors, the differentiation tape, seeded sampling and gradient checking.

pub mod gradcheck;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport, NamedTensors, Parameters};
pub use rng::RngStream;
pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::Tensor2;
