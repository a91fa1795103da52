//! Minimal reverse-mode differentiation engine and Adam optimizer.

mod adam;
mod check;
mod tape;

pub use adam::{AdamHyper, AdamState, OptimError};
pub use check::{grad_check, GradCheckReport};
pub use tape::{Gradients, Scalar, Tape, Var};
