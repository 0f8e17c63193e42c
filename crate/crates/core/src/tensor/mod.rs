//! Dense tensors, a reverse-mode tape and the layers the agents use.

mod checkpoint;
mod dense;
mod gradcheck;
mod layers;
mod params;
mod real;
mod tape;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use dense::Tensor;
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{log_softmax, sample_categorical, softmax, Conv1d, Dense, Lstm, LstmState};
pub use params::ParameterStore;
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
