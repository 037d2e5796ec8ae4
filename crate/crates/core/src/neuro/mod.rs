//! Fully connected ReLU Q-network with exact backpropagation, RMSProp, a
//! finite-difference gradient checker, and a checksummed checkpoint format.

mod checkpoint;
mod gradcheck;
mod network;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{compare_gradients, grad_check, numeric_gradient, run_suite, CoordReport, GradCheckReport, ParamCoord, SuiteOptions};
pub use network::{Dense, ForwardCache, Gradients, QNetwork};
pub use optim::RmsProp;

#[derive(Debug, thiserror::Error)]
pub enum NeuroError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o on {0}")]
    Io(String, #[source] std::io::Error),
}
