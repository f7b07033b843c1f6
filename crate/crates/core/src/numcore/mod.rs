//! Dense matrices, a reverse-mode tape, Adam, and the seeded generator.

pub mod gradcheck;
mod matrix;
mod optim;
mod rng;
mod tape;

pub use matrix::Matrix;
pub use optim::{Adam, AdamState, Param};
pub use rng::Rng;
pub use tape::{sigmoid, softplus, Gradients, Tape, Var};
