//! Dense LP engine and model assembly.

mod builder;
mod simplex;

pub use builder::{LpBuilder, Sense};
pub use simplex::{simplex_solve, LpSolution, LpStatus, StandardLp, REFACTOR_EVERY};
