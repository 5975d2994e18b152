//! Forward-mode duals and a reverse-mode tape, both usable through [`Real`](crate::Real).

mod dual;
mod tape;

pub use dual::{jacobian2, Dual, Jacobian2};
pub use tape::{grad, Gradients, SweepStats, Tape, TapeError, Var};
