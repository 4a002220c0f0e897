//! Reference optimization models solved exactly by the LP engine.

mod ed;
mod scopf;

pub use ed::{Dispatch, EdLp, EdModel, EdParams, Penalties};
pub use scopf::{
    ContingencyDispatch, LineContingency, ScopfModel, ScopfSlacks, ScopfSolution,
    DEFAULT_PATTERN_BUDGET,
};
