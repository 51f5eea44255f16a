//! Recurrent UNet variants for multi-temporal change detection.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod recurrent;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
