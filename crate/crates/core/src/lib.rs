//! Sentiment-seeded GAN forecasting of daily closing prices.
//!
//! The crate is `no_std` with `alloc`; file formats, the command-line front
//! end and fixtures live in the `stgan` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod arima;
pub mod error;
pub mod eval;
pub mod features;
pub mod gan;
pub mod indicators;
pub mod ingest;
pub mod latent;
mod linalg;
pub mod neural;
pub mod sentiment;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
