//! Reverse-mode gradient propagation, the Adam optimizer and the cosine
//! learning-rate schedule.

mod adam;
mod linalg;
mod scalar;
mod schedule;
mod tape;

pub use adam::{adam_step, AdamEntry, AdamState};
pub use scalar::Scalar;
pub use schedule::{cosine_boundary, cosine_lr};
pub use tape::{Tape, TensorId};
