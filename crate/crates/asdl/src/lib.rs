//! Command-line toolkit around `asdl-core`: configuration, file formats and
//! the simulate → features → labels → train → eval → report pipeline.

pub mod ablation;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use config::{ExperimentConfig, Snr};
pub use error::{AppError, Result};
pub use pipeline::Pipeline;
