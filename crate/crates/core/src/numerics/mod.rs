//! Dense tensors, reverse-mode differentiation, the optimizer and a
//! finite-difference gradient checker.

pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tape::{BoundParams, Gradients, Tape, Var};
pub use tensor::Tensor;
