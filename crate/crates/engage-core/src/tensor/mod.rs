//! Dense 64-bit tensor engine: plain matrices, a reverse-mode tape, a
//! finite-difference gradient checker, and first-order optimizers.

mod fd;
mod matrix;
mod optim;
mod tape;

pub use fd::{fd_check, FdReport};
pub use matrix::Matrix;
pub use optim::{sgd_step, AdamConfig, AdamState};
pub use tape::{Tape, Tensor};
