pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod dna;
pub mod error;
pub mod harness;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod sequencer;
pub mod tensor;

pub use error::{Error, Result};
