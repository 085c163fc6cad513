//! File formats, checkpoints, run configuration and the batch pipeline
//! around [`stgan_core`].

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod formats;
pub mod pipeline;

pub use error::{Error, Result};
