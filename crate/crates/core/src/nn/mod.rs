//! Small dense networks with hand-written backpropagation.

mod adam;
mod gradcheck;
mod mlp;
mod train;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport, Offender};
pub use mlp::{box_map, box_map_backward, default_hidden_width, Activation, Mlp, MlpGrad, Tape};
pub use train::{batch_gradient, minibatches, EpochRecord};
