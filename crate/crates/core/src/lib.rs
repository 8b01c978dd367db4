//! Closed-form entropy change across dense and convolutional layers, the
//! entropy-guided loss terms built on it, and a small experiment harness.

pub mod cli;
pub mod datasets;
pub mod dump;
pub mod entropy;
pub mod error;
pub mod loss;
pub mod nn;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
