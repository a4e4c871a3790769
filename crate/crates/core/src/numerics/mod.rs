//! Differentiable array core: tape-based reverse-mode gradients, parameters,
//! Adam, seeded randomness, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod param;
mod rng;
mod tape;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use param::{Module, Param};
pub use rng::{Rng, RngState};
pub use tape::{Gradients, Tape, Var};
