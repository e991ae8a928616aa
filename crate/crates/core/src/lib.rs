//! Hemisphere neural networks for latent-component Phillips curves.

pub mod analysis;
pub mod bench;
pub mod config;
pub mod data;
pub mod date;
pub mod error;
pub mod estimate;
pub mod model;
pub mod run;
pub mod nn;
pub mod seed;
pub mod synthetic;

pub use date::{Quarter, QuarterRange};
pub use error::{Error, ErrorCategory, Result};
