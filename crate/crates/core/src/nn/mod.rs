//! Dense networks, reverse-mode gradients and Adam.

pub mod adam;
pub mod dense;
pub mod io;

pub use adam::{AdamConfig, AdamState};
pub use dense::{Activation, DenseNet, Gradients, Layer, Mode, Tape};
pub use io::DenseNetRecord;
