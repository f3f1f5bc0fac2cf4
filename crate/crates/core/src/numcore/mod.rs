//! Dense arrays, reverse-mode differentiation, finite-difference checking,
//! Adam and the cosine learning-rate schedule.

mod adam;
mod array;
mod fd;
mod schedule;
mod tape;

pub use adam::AdamState;
pub use array::RealArray;
pub use fd::finite_diff_grad;
pub use schedule::cosine_lr;
pub use tape::{grad, Tape, Var};
